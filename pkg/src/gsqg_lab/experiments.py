"""Convergence studies built on the integrators: parameter stability, flow-map
continuity via the Kato splitting, vanishing viscosity, and the Gronwall and
flux-bound scaling surveys."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .evolution import (ClawProblem, CoefficientPath, ConstantPath, DegenerateError, IntegrationError,
                        MollifiedPath, PiecewiseLinearPath, SimConfig, _kernel, _rk4, _dt_limit,
                        _check_finite, flux_bound_check, hs_norm, run_claw, run_gsqg)
from .spectral import Grid, SpectralField, make_grid, random_field

__all__ = [
    "ConvergenceTable",
    "stability_experiment",
    "continuity_experiment",
    "viscosity_continuation",
    "gronwall_study",
    "flux_bound_sweep",
    "is_monotone_decreasing",
]


@dataclass
class ConvergenceTable:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_json(self) -> dict:
        return {"name": self.name, "columns": self.columns, "rows": self.rows, "meta": self.meta}


def is_monotone_decreasing(values: Sequence[float], strict: bool = True) -> bool:
    pairs = zip(values, values[1:])
    return all(b < a for a, b in pairs) if strict else all(b <= a for a, b in pairs)


def _sup_diff(a: list, b: list, grid: Grid, sigma: float) -> float:
    if len(a) != len(b):
        raise IntegrationError("runs recorded different numbers of snapshots; use a fixed dt")
    return max(hs_norm(x - y, grid, sigma) for x, y in zip(a, b))


# --------------------------------------------------------------------------
# Stability in the coefficient


def _l1_h_error(path: MollifiedPath, base: PiecewiseLinearPath, T: float, sigma: float) -> float:
    """int_0^T ||q^n - q||_{H^sigma} dt by Gauss panels split at knots and mollifier edges."""
    grid = base.grid
    vals = base.values.reshape(len(base.times), -1)
    w = ((1.0 + grid.kmag ** 2) ** sigma).ravel()
    gram = (grid.side_length ** 2) * ((vals * w) @ np.conj(vals).T).real
    h = path.width
    breaks = np.concatenate([[0.0, T], base.times, base.times - h, base.times + h])
    breaks = np.unique(np.clip(breaks, 0.0, T))
    x, wq = np.polynomial.legendre.leggauss(16)
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        for xi, wi in zip(x, wq):
            t = 0.5 * (b - a) * (xi + 1) + a
            d = path.weights(t) - base.hat_weights(t)[0]
            total += 0.5 * (b - a) * wi * math.sqrt(max(float(d @ gram @ d), 0.0))
    return total


def stability_experiment(q_ref: PiecewiseLinearPath, theta0: SpectralField, cfg: SimConfig,
                         n_levels: Sequence[int], G: Optional[CoefficientPath] = None) -> ConvergenceTable:
    """Mollify q in time at each level n and compare the linear-law solutions.

    The step must be fixed (``cfg.dt``) so that all runs share snapshot times.
    """
    if cfg.dt is None:
        raise ValueError("stability_experiment needs a fixed time step (cfg.dt)")
    levels = list(n_levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("n_levels must be increasing")
    for n in levels:
        if 1.0 / n < cfg.dt:
            raise ValueError(f"mollifier width 1/{n} is below the time step {cfg.dt:g}")
    grid = theta0.grid
    beta = cfg.beta
    ref = run_claw(ClawProblem(theta0, q_ref, G, cfg.viscosity), cfg)
    table = ConvergenceTable("stability", ["n", "solution_error", "coefficient_error", "ratio"],
                             meta={"sigma": beta, "dt": cfg.dt, "time_horizon": cfg.time_horizon})
    for n in levels:
        qn = MollifiedPath(q_ref, n)
        run = run_claw(ClawProblem(theta0, qn, G, cfg.viscosity), cfg)
        sol = _sup_diff(run.snapshots, ref.snapshots, grid, beta)
        coef = _l1_h_error(qn, q_ref, cfg.time_horizon, beta)
        ratio = sol / coef if coef > 0 else float("nan")
        table.rows.append([n, sol, coef, ratio])
    return table


# --------------------------------------------------------------------------
# Continuity of the flow map


def _joint_rhs(ker, nu: float):
    """Right side for (theta, theta_n, omega_1, omega_2, zeta_1, zeta_2)."""

    def f(t, y):
        th, thn, w1, w2, z1, z2 = y
        out = np.empty_like(y)
        out[0] = -ker.div_flux(-th, th)
        out[1] = -ker.div_flux(-thn, thn)
        for l, (w, z) in enumerate(((w1, z1), (w2, z2))):
            dk = ker.ik1 if l == 0 else ker.ik2
            g_l = ker.div_flux(dk * th, th)
            g_ln = ker.div_flux(dk * thn, thn)
            out[2 + l] = g_l - ker.div_flux(-thn, w)
            out[4 + l] = (g_ln - g_l) - ker.div_flux(-thn, z)
        if nu:
            out -= nu * ker.k2 * y
        return out

    return f


def continuity_experiment(theta0: SpectralField, perturbations: Sequence[SpectralField], cfg: SimConfig,
                          reconstruction_tol: float = 1e-9) -> ConvergenceTable:
    """Kato splitting d_l theta^n = omega_l^n + zeta_l^n along perturbed runs.

    Each perturbed datum is integrated jointly with the reference solution and
    the four linear problems so that all share one time grid.
    """
    grid = theta0.grid
    ker = _kernel(grid, cfg.beta, cfg.mu)
    f = _joint_rhs(ker, cfg.viscosity)
    b = cfg.beta
    table = ConvergenceTable(
        "continuity",
        ["amplitude", "theta_h_beta", "omega_h_beta", "zeta_h_beta", "theta_h_beta1", "reconstruction"],
        meta={"beta": b, "mu": cfg.mu, "time_horizon": cfg.time_horizon})
    th0 = theta0.coeffs
    for pert in perturbations:
        if pert.grid != grid:
            raise ValueError("perturbation lives on a different grid")
        thn0 = th0 + pert.coeffs
        y = np.stack([th0, thn0, ker.ik1 * th0, ker.ik2 * th0,
                      ker.ik1 * pert.coeffs, ker.ik2 * pert.coeffs]).astype(complex)
        cols = np.zeros(5)
        t, T = 0.0, cfg.time_horizon

        def measure(y):
            th, thn, w1, w2, z1, z2 = y
            d = thn - th
            om = np.stack([w1 - ker.ik1 * th, w2 - ker.ik2 * th])
            recon = np.stack([ker.ik1 * thn - w1 - z1, ker.ik2 * thn - w2 - z2])
            scale = max(hs_norm(np.stack([ker.ik1 * thn, ker.ik2 * thn]), grid, 0.0), 1e-300)
            return np.array([hs_norm(d, grid, b), hs_norm(om, grid, b), hs_norm(np.stack([z1, z2]), grid, b),
                             hs_norm(d, grid, b + 1), hs_norm(recon, grid, 0.0) / scale])

        cols = np.maximum(cols, measure(y))
        while t < T * (1 - 1e-14):
            speed = max(ker.max_speed(y[0]), ker.max_speed(y[1]))
            dt = cfg.dt if cfg.dt is not None else _dt_limit(ker, speed, cfg.cfl_factor, cfg.viscosity)
            last = t + dt >= T * (1 - 1e-12)
            if last:
                dt = T - t
            y = _rk4(f, t, y, dt)
            _check_finite(y, f"continuity run at t={t:.4g}")
            t = T if last else t + dt
            cols = np.maximum(cols, measure(y))
        if cols[4] > reconstruction_tol:
            raise IntegrationError(f"Kato reconstruction residual {cols[4]:.3e} exceeds {reconstruction_tol:g}")
        amp = hs_norm(pert.coeffs, grid, b + 1)
        table.rows.append([amp] + [float(v) for v in cols])
    return table


# --------------------------------------------------------------------------
# Vanishing viscosity


def viscosity_continuation(theta0: SpectralField, cfg: SimConfig, nu_levels: Sequence[float],
                           nu_ref: float = 0.0) -> ConvergenceTable:
    """sup_t ||theta^nu - theta^{nu_ref}||_{H^beta} at a common fixed step.

    The step is the smallest admissible over all levels (CFL from the initial
    datum with a safety margin, and the diffusive bound at the largest nu).
    """
    levels = [float(v) for v in nu_levels]
    if any(b >= a for a, b in zip(levels, levels[1:])):
        raise ValueError("nu_levels must be strictly decreasing")
    if any(v < 0 for v in levels):
        raise ValueError("viscosities must be nonnegative")
    grid = theta0.grid
    dt = cfg.dt
    if dt is None:
        ker = _kernel(grid, cfg.beta, cfg.mu)
        dt = 0.5 * _dt_limit(ker, ker.max_speed(theta0.coeffs), cfg.cfl_factor, max(levels + [nu_ref]))
        steps = math.ceil(cfg.time_horizon / dt)
        dt = cfg.time_horizon / steps
    base = replace(cfg, dt=dt, keep_snapshots=True)
    ref = run_gsqg(theta0, replace(base, viscosity=nu_ref))
    table = ConvergenceTable("viscosity", ["nu", "deviation_h_beta"],
                             meta={"nu_ref": nu_ref, "dt": dt, "sigma": cfg.beta})
    for nu in levels:
        run = ref if nu == nu_ref else run_gsqg(theta0, replace(base, viscosity=nu))
        table.rows.append([nu, _sup_diff(run.snapshots, ref.snapshots, grid, cfg.beta)])
    return table


# --------------------------------------------------------------------------
# Surveys


def gronwall_study(cfg: SimConfig, n_trials: int, seed: int, kmax_q: float = 4.0, kmax_theta: float = 6.0,
                   q_amplitude: float = 1.0) -> ConvergenceTable:
    """Largest instantaneous Gronwall ratio along random linear-law runs with fixed q, G = 0."""
    grid = cfg.grid()
    sig = list(cfg.sigmas)
    table = ConvergenceTable("gronwall", ["trial"] + [f"max_ratio_h{s:g}" for s in sig],
                             meta={"n_points": cfg.n_points, "seed": seed})
    for t in range(n_trials):
        rng = np.random.default_rng([seed, t])
        q = random_field(grid, rng, 1.0, kmax_q, q_amplitude)
        th = random_field(grid, rng, 1.0, kmax_theta, 1.0)
        traj = run_claw(ClawProblem(th, ConstantPath(q)), cfg)
        table.rows.append([t] + [traj.max_gronwall(s) for s in sig])
    return table


def flux_bound_sweep(beta: float, mu: float, blocks: Sequence[int], trials_per_block: int, seed: int,
                     offset: int = 2, side_length: float = 2 * math.pi) -> ConvergenceTable:
    """Largest flux_bound_check ratio with q supported on the annulus of block j.

    Divergence of the flux is a commutator, so the ratio is largest when theta
    lives ``offset`` blocks above q and sits where |grad A q| peaks; both are
    coherent packets.  The fitted log2 slope is stored in ``meta``.
    """
    from .commutators import packet
    from .evolution import _kernel

    table = ConvergenceTable("flux_bound", ["j", "max_ratio", "skipped"],
                             meta={"beta": beta, "mu": mu, "offset": offset, "side_length": side_length})
    base = 2 * math.pi / side_length
    for j in blocks:
        radius = 2.0 ** (j + offset + 1) + 2.0 ** (j + 1)
        n = 16
        while (2.0 / 3.0) * (n / 2) * base < radius:
            n *= 2
        _kernel.cache_clear()
        grid = make_grid(n, side_length)
        ker = _kernel(grid, beta, mu)
        best, skipped = 0.0, 0
        for t in range(trials_per_block):
            rng = np.random.default_rng([seed, j, t])
            x0 = rng.uniform(0, side_length, 2)
            q = packet(grid, rng, 2.0 ** (j - 1), 2.0 ** (j + 1), 1.0, x0)
            w1, w2 = ker.velocity(q.coeffs)
            peak = np.unravel_index(np.argmax(w1 * w1 + w2 * w2), w1.shape)
            th = packet(grid, rng, 2.0 ** (j + offset - 1), 2.0 ** (j + offset + 1), 1.0,
                        np.array(peak) * grid.dx)
            try:
                best = max(best, flux_bound_check(q, th, beta, mu))
            except DegenerateError:
                skipped += 1
        table.rows.append([j, best, skipped])
    _kernel.cache_clear()
    js = [r[0] for r in table.rows if r[1] > 0]
    vals = [math.log2(r[1]) for r in table.rows if r[1] > 0]
    table.meta["slope"] = float(np.polyfit(js, vals, 1)[0]) if len(js) > 1 else float("nan")
    return table
