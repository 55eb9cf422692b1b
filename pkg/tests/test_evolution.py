import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsqg_lab.evolution import (CFLError, ClawProblem, ConstantPath, DegenerateError, HermitePath, MollifiedPath,
                                PiecewiseLinearPath, SimConfig, advection, cfl_dt, div_flux, flux,
                                flux_bound_check, hs_norm, mollifier, path_from_trajectory, rhs, run_claw,
                                run_gsqg, step)
from gsqg_lab.experiments import flux_bound_sweep
from gsqg_lab.spectral import (GridMismatchError, MultiplierSymbol, SpectralField, apply_multiplier, make_grid,
                               perp_gradient, random_field, sobolev_norm)
from gsqg_lab.verify import oracle_flux, random_sparse_field, skew_adjoint_sides

B, MU = 1.5, 0.6
G32 = make_grid(32)
G64 = make_grid(64)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def rnd(grid, seed, kmin=1.0, kmax=6.0, amp=1.0):
    return random_field(grid, np.random.default_rng(seed), kmin, kmax, amp)


def a_of(r, beta=B, mu=MU):
    return r ** (beta - 2) * math.log(math.e + r * r) ** -mu


# ---------------------------------------------------------------- configuration


@pytest.mark.parametrize("kw", [dict(beta=1.0), dict(beta=2.0), dict(mu=0.5), dict(time_horizon=0.0),
                                dict(cfl_factor=0.0), dict(cfl_factor=1.5), dict(viscosity=-1e-3),
                                dict(diagnostics_stride=0), dict(dt=-0.1)])
def test_simconfig_rejects(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_simconfig_sigmas_default():
    assert SimConfig(beta=1.3).sigmas == (1.0, 1.3, 2.3)
    assert SimConfig(norm_exponents=[0, 2]).sigmas == (0.0, 2.0)


# ---------------------------------------------------------------- flux


def test_flux_zero_q():
    F = flux(SpectralField.zeros(G32), rnd(G32, 1), B, MU)
    assert not np.any(F[0].coeffs) and not np.any(F[1].coeffs)


def test_flux_constant_theta():
    q = rnd(G32, 2)
    c = 2.5
    F = flux(q, SpectralField.constant(G32, c), B, MU)
    w = perp_gradient(apply_multiplier(q, MultiplierSymbol.constitutive(B, MU)))
    for a, b in zip(F, w):
        assert rel(a.coeffs, c * b.coeffs) <= 1e-14


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_flux_oracle(seed):
    g8 = make_grid(8)
    rng = np.random.default_rng(seed)
    q = random_sparse_field(g8, rng, 2, g8.dealias_radius, allow_mean=True)
    th = random_sparse_field(g8, rng, 2, g8.dealias_radius, allow_mean=True)
    F, O = flux(q, th, B, MU), oracle_flux(q, th, B, MU)
    for a, b in zip(F, O):
        assert np.linalg.norm(a.coeffs - b.coeffs) <= 1e-12 * max(np.linalg.norm(b.coeffs), 1e-300) + 1e-15


@pytest.mark.parametrize("m", [(1, 0), (3, -2), (5, 7)])
def test_div_flux_single_mode_steady(m):
    th = SpectralField.mode(G64, *m, 1.3, 0.4)
    assert np.max(np.abs(div_flux(-th, th, B, MU).coeffs)) <= 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1.05, 1.95), st.floats(0.55, 2.0))
def test_flux_identity(seed, beta, mu):
    th = rnd(G64, seed, 0.0, 10.0)
    got = div_flux(-th, th, beta, mu).coeffs
    want = advection(th, beta, mu).coeffs
    assert rel(got, want) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_skew_adjoint_sides(seed):
    q = rnd(G64, seed, 0.0, 10.0)
    th = rnd(G64, seed + 1, 0.0, 10.0)
    lhs, rhs_ = skew_adjoint_sides(q, th, B, MU)
    assert abs(lhs - rhs_) <= 1e-11 * max(abs(lhs), abs(rhs_))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_A_dl_skew(seed):
    f, g = rnd(G64, seed, 0.0, 12.0), rnd(G64, seed + 7, 0.0, 12.0)
    A = MultiplierSymbol.constitutive(B, MU)
    from gsqg_lab.spectral import derivative, inner_product
    for l in (1, 2):
        a = inner_product(apply_multiplier(derivative(f, l), A), g)
        b = inner_product(f, apply_multiplier(derivative(g, l), A))
        assert abs(a + b) <= 1e-13 * (abs(a) + 1e-300) + 1e-15


# ---------------------------------------------------------------- rhs and step


def test_rhs_single_mode_viscous():
    th = SpectralField.mode(G64, 3, 4)
    out = rhs(th, SimConfig(viscosity=0.01))
    assert rel(out.coeffs, -0.01 * 25 * th.coeffs) <= 1e-12


def test_rhs_zero():
    assert not np.any(rhs(SpectralField.zeros(G64), SimConfig()).coeffs)


def test_rhs_energy_bounded():
    cfg = SimConfig()
    ratios = []
    for t in range(30):
        th = rnd(G64, 100 + t, 0.0, 12.0)
        e = abs(rhs(th, cfg).inner(th))
        den = hs_norm(th.coeffs, G64, B + 1) * sobolev_norm(th, 0.1) * th.norm()
        ratios.append(e / den)
    # the cubic term vanishes by skew-adjointness, so the constant is tiny
    assert max(ratios) <= 1e-13


def test_rhs_nan_detected():
    bad = SpectralField.zeros(G32).with_coeffs(np.full(G32.shape, np.nan + 0j))
    with pytest.raises(Exception):
        rhs(bad, SimConfig())


def test_step_steady_mode():
    th = SpectralField.mode(G64, 2, 5, 0.8)
    cfg = SimConfig()
    out = step(th, 0.5 * cfl_dt(th, cfg), cfg)
    assert rel(out.coeffs, th.coeffs) <= 1e-13


def test_step_heat_mode():
    nu, k2 = 0.02, 13.0
    th = SpectralField.mode(G64, 2, 3)
    cfg = SimConfig(viscosity=nu)
    errs = []
    for dt in (0.02, 0.01):
        out = step(th, dt, cfg)
        errs.append(rel(out.coeffs, math.exp(-nu * k2 * dt) * th.coeffs))
    assert errs[0] <= 1e-9
    assert 20 <= errs[0] / errs[1] <= 45


def test_step_richardson():
    th = rnd(G64, 3, 1.0, 5.0)
    cfg = SimConfig(cfl_factor=1.0)
    dt = 0.4 * cfl_dt(th, cfg)
    ref = th
    for _ in range(64):
        ref = step(ref, dt / 64, cfg)
    e1 = rel(step(th, dt, cfg).coeffs, ref.coeffs)
    ref2 = th
    for _ in range(32):
        ref2 = step(ref2, dt / 64, cfg)
    e2 = rel(step(th, dt / 2, cfg).coeffs, ref2.coeffs)
    assert 20 <= e1 / e2 <= 45


def test_step_cfl_violation():
    th = rnd(G64, 4, 1.0, 6.0, 5.0)
    cfg = SimConfig()
    with pytest.raises(CFLError):
        step(th, 2 * cfl_dt(th, cfg), cfg)


def test_cfl_diffusive_limit():
    th = SpectralField.zeros(G64)
    cfg = SimConfig(viscosity=1.0)
    assert cfl_dt(th, cfg) == pytest.approx(G64.dx ** 2 / 4)


# ---------------------------------------------------------------- trajectories


def test_run_single_mode_constant():
    th = SpectralField.mode(G64, 1, 2, 0.7, 1.0)
    traj = run_gsqg(th, SimConfig(n_points=64, time_horizon=0.5))
    for series in [traj.l2] + list(traj.hnorms.values()):
        assert max(abs(v - series[0]) for v in series) <= 1e-12 * series[0]
    assert rel(traj.snapshots[-1], th.coeffs) <= 1e-12


def test_run_conserves_mean_and_l2():
    th = rnd(G64, 5, 0.0, 6.0) + 0.3
    traj = run_gsqg(th, SimConfig(n_points=64, time_horizon=0.5))
    assert all(m == traj.mean[0] for m in traj.mean)
    assert traj.l2_drift() <= 1e-10
    assert max(traj.flux_residual) <= 1e-12
    times = traj.times
    assert all(b > a for a, b in zip(times, times[1:])) and times[-1] == 0.5


def test_t_star_reported():
    th = rnd(G64, 6, 1.0, 8.0, 3.0)
    traj = run_gsqg(th, SimConfig(n_points=64, time_horizon=2.0, blowup_factor=1e6))
    crit = traj.hnorms[B + 1]
    first = next((t for t, v in zip(traj.times, crit) if v > 2 * crit[0]), None)
    assert traj.t_star == first


def test_blowup_guard():
    th = rnd(G64, 6, 1.0, 8.0, 3.0)
    traj = run_gsqg(th, SimConfig(n_points=64, time_horizon=5.0, blowup_factor=1.05))
    assert traj.aborted and "exceeded" in traj.abort_reason
    assert traj.times[-1] < 5.0


def test_diagnostics_stride():
    th = rnd(G32, 7, 1.0, 4.0)
    traj = run_gsqg(th, SimConfig(n_points=32, time_horizon=0.3, diagnostics_stride=3))
    assert len(traj.times) == 1 + math.ceil(traj.steps / 3) or traj.times[-1] == 0.3


def test_claw_feedback_reproduces_gsqg():
    th = rnd(G64, 8, 1.0, 6.0)
    cfg = SimConfig(n_points=64, time_horizon=0.5, dt=0.01)
    traj = run_gsqg(th, cfg)
    claw = run_claw(ClawProblem(th, path_from_trajectory(traj)), cfg)
    err = max(rel(a, b) for a, b in zip(claw.snapshots, traj.snapshots))
    assert err <= 1e-10


def test_claw_q_zero_constant_and_heat():
    th = rnd(G32, 9, 1.0, 5.0)
    zero = ConstantPath(SpectralField.zeros(G32))
    cfg = SimConfig(n_points=32, time_horizon=0.2)
    still = run_claw(ClawProblem(th, zero), cfg)
    assert np.array_equal(still.snapshots[-1], th.coeffs)
    nu = 0.05
    heat = run_claw(ClawProblem(th, zero, None, nu), SimConfig(n_points=32, time_horizon=0.2, dt=0.005))
    want = np.exp(-nu * G32.kmag ** 2 * 0.2) * th.coeffs
    assert rel(heat.snapshots[-1], want) <= 1e-10


def test_claw_forcing():
    g = SpectralField.mode(G32, 1, 1)
    th0 = SpectralField.zeros(G32)
    cfg = SimConfig(n_points=32, time_horizon=0.4, dt=0.01)
    traj = run_claw(ClawProblem(th0, ConstantPath(SpectralField.zeros(G32)), ConstantPath(g)), cfg)
    assert rel(traj.snapshots[-1], 0.4 * g.coeffs) <= 1e-13


def test_claw_grid_mismatch():
    with pytest.raises(GridMismatchError):
        ClawProblem(rnd(G32, 1), ConstantPath(rnd(G64, 1)))


def test_gronwall_exponential_bound():
    q = rnd(G64, 10, 1.0, 4.0)
    th = rnd(G64, 11, 1.0, 6.0)
    cfg = SimConfig(n_points=64, time_horizon=1.0)
    traj = run_claw(ClawProblem(th, ConstantPath(q)), cfg)
    qn = hs_norm(q.coeffs, G64, B + 1)
    for s in cfg.sigmas:
        C = traj.max_gronwall(s)
        assert math.isfinite(C)
        n0 = traj.hnorms[s][0]
        for t, v in zip(traj.times, traj.hnorms[s]):
            assert v <= math.exp(C * qn * t) * n0 * (1 + 1e-10)


def test_uniqueness_across_dt():
    th = rnd(G64, 12, 1.0, 6.0)
    a = run_gsqg(th, SimConfig(n_points=64, time_horizon=0.5, dt=0.01))
    b = run_gsqg(th, SimConfig(n_points=64, time_horizon=0.5, dt=0.005))
    assert rel(a.snapshots[-1], b.snapshots[-1]) <= 1e-8


def test_fixed_dt_cfl_violation():
    th = rnd(G64, 4, 1.0, 6.0, 5.0)
    with pytest.raises(CFLError):
        run_gsqg(th, SimConfig(n_points=64, dt=1.0))


# ---------------------------------------------------------------- paths


def test_piecewise_linear_path():
    f0, f1 = rnd(G32, 1), rnd(G32, 2)
    p = PiecewiseLinearPath([0.0, 1.0], [f0, f1])
    assert np.allclose(p.coeffs_at(0.25), 0.75 * f0.coeffs + 0.25 * f1.coeffs)
    assert np.array_equal(p.coeffs_at(-1.0), f0.coeffs)
    with pytest.raises(ValueError):
        PiecewiseLinearPath([0.0, 0.0], [f0, f1])


def test_hermite_path_cubic_exact():
    t = np.array([0.0, 0.4, 1.0])
    base = rnd(G32, 3).coeffs
    vals = np.stack([(ti ** 3 - ti) * base for ti in t])
    ders = np.stack([(3 * ti ** 2 - 1) * base for ti in t])
    p = HermitePath(t, vals, ders, G32)
    for s in (0.1, 0.55, 0.9):
        assert np.allclose(p.coeffs_at(s), (s ** 3 - s) * base, atol=1e-14)


def test_mollifier_shape():
    r = np.linspace(-1.5, 1.5, 301)
    m = mollifier(r)
    assert np.all(m[np.abs(r) >= 1] == 0) and m.max() == pytest.approx(math.exp(-1))


def test_mollified_constant_path_exact():
    f = rnd(G32, 4)
    base = PiecewiseLinearPath([0.0, 0.5, 1.0], [f, f, f])
    p = MollifiedPath(base, 8)
    for t in (0.0, 0.3, 0.97):
        assert np.allclose(p.coeffs_at(t), f.coeffs, rtol=0, atol=1e-14)
        assert p.weights(t).sum() == pytest.approx(1.0, rel=1e-14)


def test_mollified_linear_path_exact_inside():
    f0, f1 = rnd(G32, 5), rnd(G32, 6)
    base = PiecewiseLinearPath([0.0, 1.0], [f0, f1])
    p = MollifiedPath(base, 10)
    # symmetric kernel reproduces linear functions away from the ends
    assert np.allclose(p.coeffs_at(0.5), base.coeffs_at(0.5), atol=1e-14)


# ---------------------------------------------------------------- flux bound


def test_flux_bound_degenerate():
    with pytest.raises(DegenerateError):
        flux_bound_check(SpectralField.zeros(G32), rnd(G32, 1), B, MU)


def test_flux_bound_single_mode_pair():
    q = SpectralField.mode(G64, 1, 0)
    th = SpectralField.mode(G64, 0, 1)
    got = flux_bound_check(q, th, B, MU)
    # Div F_q(theta) = (a(1) - a(sqrt 2)) sin x1 sin x2
    num = abs(a_of(1.0) - a_of(math.sqrt(2))) * 3 ** (B / 2) * math.pi
    den = 2 ** (B / 2) * math.sqrt(2 * math.pi ** 2) * 2 ** ((B + 1) / 2) * math.sqrt(2 * math.pi ** 2)
    assert got == pytest.approx(num / den, rel=1e-13)


def test_flux_bound_scaling_slope():
    """Sweep over the block of q; the requirement is a log2 slope within 0.1 of zero."""
    table = flux_bound_sweep(B, MU, range(0, 5), 20, seed=0)
    assert all(math.isfinite(v) and v > 0 for v in table.column("max_ratio"))
    assert abs(table.meta["slope"]) <= 0.1, f"slope {table.meta['slope']:.4f}"
