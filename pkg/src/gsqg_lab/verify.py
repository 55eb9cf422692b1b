"""Brute-force convolution oracles and the named verification suites.

The oracles work on sparse fields (a handful of nonzero Fourier modes) and
evaluate every symbol from its closed form, without touching the FFT path or
``MultiplierSymbol``, so they are independent of the code they check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .commutators import commutator_bracket, convexity_integral, trilinear_L
from .evolution import div_flux, flux, run_gsqg, SimConfig
from .littlewood_paley import (almost_orthogonality, besov_sobolev_ratio, bernstein_check, build_partition,
                               dyadic_block)
from .spectral import (Grid, MultiplierSymbol, SpectralField, inner_product, make_grid, pointwise_product,
                       random_field, velocity_from_scalar, derivative, perp_gradient)

__all__ = [
    "SuiteReport",
    "sparse_modes",
    "oracle_product",
    "oracle_bracket",
    "oracle_trilinear",
    "oracle_flux",
    "random_sparse_field",
    "SUITES",
    "run_suite",
]


# --------------------------------------------------------------------------
# Sparse representation


def sparse_modes(f: SpectralField, tol: float = 0.0) -> dict:
    """{(m1, m2): coefficient} over nonzero modes, with signed integer indices."""
    idx = np.argwhere(np.abs(f.coeffs) > tol)
    n = f.grid.n_points
    out = {}
    for i, j in idx:
        m1 = int(i) if i < n // 2 else int(i) - n
        m2 = int(j) if j < n // 2 else int(j) - n
        out[(m1, m2)] = complex(f.coeffs[i, j])
    return out


def _dense(grid: Grid, modes: dict) -> np.ndarray:
    n = grid.n_points
    c = np.zeros(grid.shape, complex)
    for (m1, m2), v in modes.items():
        c[m1 % n, m2 % n] += v
    return c


def _retained(grid: Grid, m) -> bool:
    k = grid.base_wavenumber * math.hypot(*m)
    return k <= grid.dealias_radius * (1 + 1e-12)


def _convolve(grid: Grid, f: dict, g: dict, weight: Callable) -> np.ndarray:
    """sum over output xi = a + b of weight(xi, a, b) f_a g_b, restricted to retained modes."""
    out: dict = {}
    for a, fa in f.items():
        for b, gb in g.items():
            xi = (a[0] + b[0], a[1] + b[1])
            if _retained(grid, xi):
                out[xi] = out.get(xi, 0) + weight(xi, a, b) * fa * gb
    return _dense(grid, out)


def _wave(grid: Grid, m) -> np.ndarray:
    return grid.base_wavenumber * np.array(m, dtype=float)


def _constitutive(k: np.ndarray, beta: float, mu: float) -> float:
    r = float(np.hypot(*k))
    if r == 0:
        return 0.0
    return r ** (beta - 2) * math.log(math.e + r * r) ** (-mu)


def oracle_product(f: SpectralField, g: SpectralField) -> SpectralField:
    return f.with_coeffs(_convolve(f.grid, sparse_modes(f), sparse_modes(g), lambda xi, a, b: 1.0))


def oracle_bracket(f: SpectralField, g: SpectralField, s: float, direction: int,
                   P: Callable[[float], float] = lambda r: 1.0) -> SpectralField:
    """[Lambda^-s P(D) d_l, g] f from m(xi) - m(xi - eta), eta the g mode."""
    grid = f.grid

    def m(v):
        r = float(np.hypot(*v))
        return 0.0 if r == 0 else r ** (-s) * P(r) * 1j * v[direction - 1]

    def w(xi, a, b):
        return m(_wave(grid, xi)) - m(_wave(grid, a))

    return f.with_coeffs(_convolve(grid, sparse_modes(f), sparse_modes(g), w))


def oracle_trilinear(f: SpectralField, g: SpectralField, h: SpectralField, sigma: float) -> complex:
    grid = f.grid
    c = _convolve(grid, sparse_modes(f), sparse_modes(g), lambda xi, a, b: float(np.hypot(*_wave(grid, xi))) ** sigma
                  if xi != (0, 0) else 0.0)
    return complex(grid.side_length ** 2 * np.sum(c * np.conj(h.coeffs)))


def oracle_flux(q: SpectralField, theta: SpectralField, beta: float, mu: float) -> tuple:
    """F_q(theta) mode by mode: i b^perp A(b) q_b theta_a + A(a+b) i a^perp theta_a q_b."""
    grid = theta.grid
    tm, qm = sparse_modes(theta), sparse_modes(q)
    comps = []
    for comp in (0, 1):
        def w(xi, a, b, comp=comp):
            ka, kb, kx = _wave(grid, a), _wave(grid, b), _wave(grid, xi)
            perp_b = (-kb[1], kb[0])[comp]
            perp_a = (-ka[1], ka[0])[comp]
            return 1j * perp_b * _constitutive(kb, beta, mu) + _constitutive(kx, beta, mu) * 1j * perp_a

        comps.append(theta.with_coeffs(_convolve(grid, tm, qm, w)))
    return tuple(comps)


def random_sparse_field(grid: Grid, rng: np.random.Generator, n_pairs: int, radius: float,
                        allow_mean: bool = False) -> SpectralField:
    """Real field with ``n_pairs`` conjugate mode pairs (at most 2 n_pairs coefficients) in |m| <= radius."""
    R = int(math.floor(radius / grid.base_wavenumber))
    cand = [(a, b) for a in range(-R, R + 1) for b in range(-R, R + 1)
            if (a, b) > (0, 0) and grid.base_wavenumber * math.hypot(a, b) <= radius]
    if allow_mean:
        cand.append((0, 0))
    pick = rng.choice(len(cand), size=min(n_pairs, len(cand)), replace=False)
    modes = {}
    for p in pick:
        m = cand[int(p)]
        z = complex(rng.standard_normal(), rng.standard_normal())
        if m == (0, 0):
            modes[m] = complex(z.real)
        else:
            modes[m] = z
            modes[(-m[0], -m[1])] = z.conjugate()
    return SpectralField(grid, _dense(grid, modes))


# --------------------------------------------------------------------------
# Suites


@dataclass
class SuiteReport:
    suite: str
    trials: int
    seed: int
    tolerance: float
    max_residual: float
    residuals: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)

    def to_json(self) -> dict:
        return {"suite": self.suite, "trials": self.trials, "seed": self.seed, "tolerance": self.tolerance,
                "max_residual": self.max_residual, "passed": self.passed, "details": self.details,
                "residuals": self.residuals}


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    nb = float(np.linalg.norm(b))
    d = float(np.linalg.norm(a - b))
    return d / nb if nb > 0 else d


def _field_grid(n: int, side: float) -> Grid:
    return make_grid(n, side)


def suite_flux_identity(trials: int, seed: int, beta: float = 1.5, mu: float = 0.6, n: int = 64,
                        side_length: float = 2 * math.pi) -> SuiteReport:
    """Div F_{-theta}(theta) against u.grad(theta) assembled through the spectral-core operators."""
    grid = _field_grid(n, side_length)
    res = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        th = random_field(grid, rng, 0.0, grid.dealias_radius / 2)
        u1, u2 = velocity_from_scalar(th, beta, mu)
        ref = pointwise_product(u1, derivative(th, 1)) + pointwise_product(u2, derivative(th, 2))
        res.append(_rel(div_flux(-th, th, beta, mu).coeffs, ref.coeffs))
    return SuiteReport("flux-identity", trials, seed, 1e-11, max(res), res, {"beta": beta, "mu": mu, "n": n})


def skew_adjoint_sides(q: SpectralField, theta: SpectralField, beta: float, mu: float) -> tuple[float, float]:
    """(<Div F_q theta, theta>, -1/2 sum_l <[A d_l, (perp_grad q)^l] theta, theta>)."""
    lhs = inner_product(div_flux(q, theta, beta, mu), theta)
    P = MultiplierSymbol.log_regularizer(mu)
    w = perp_gradient(q)
    rhs = 0.0
    for l in (1, 2):
        rhs += inner_product(commutator_bracket(P, 2.0 - beta, l, w[l - 1], theta), theta)
    return lhs, -0.5 * rhs


def suite_skew_adjoint(trials: int, seed: int, beta: float = 1.5, mu: float = 0.6, n: int = 64,
                       side_length: float = 2 * math.pi) -> SuiteReport:
    grid = _field_grid(n, side_length)
    res = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        q = random_field(grid, rng, 0.0, grid.dealias_radius / 2)
        th = random_field(grid, rng, 0.0, grid.dealias_radius / 2)
        lhs, rhs = skew_adjoint_sides(q, th, beta, mu)
        res.append(abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    return SuiteReport("skew-adjoint", trials, seed, 1e-10, max(res), res, {"beta": beta, "mu": mu, "n": n})


def suite_oracle(trials: int, seed: int, beta: float = 1.5, mu: float = 0.6) -> SuiteReport:
    """FFT operators against sparse convolution sums on an 8 x 8 grid."""
    grid = make_grid(8)
    res = {"product": [], "bracket": [], "flux": [], "trilinear": []}
    s = 2.0 - beta
    P = MultiplierSymbol.log_regularizer(mu)
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        f = random_sparse_field(grid, rng, 2, grid.dealias_radius, allow_mean=True)
        g = random_sparse_field(grid, rng, 2, grid.dealias_radius, allow_mean=True)
        res["product"].append(_rel(pointwise_product(f, g).coeffs, oracle_product(f, g).coeffs))
        # bracket inputs kept small enough that the product fits exactly
        fb = random_sparse_field(grid, rng, 2, math.sqrt(2.0))
        gb = random_sparse_field(grid, rng, 2, 1.0, allow_mean=True)
        l = int(rng.integers(1, 3))
        got = commutator_bracket(P, s, l, gb, fb).coeffs
        want = oracle_bracket(fb, gb, s, l, lambda r: math.log(math.e + r * r) ** (-mu)).coeffs
        res["bracket"].append(_rel(got, want))
        F = flux(g, f, beta, mu)
        O = oracle_flux(g, f, beta, mu)
        res["flux"].append(max(_rel(F[0].coeffs, O[0].coeffs), _rel(F[1].coeffs, O[1].coeffs)))
        # h on the annulus 1 < |xi| < 4 (block j = 1 on this grid)
        h = random_sparse_field(grid, rng, 2, grid.dealias_radius)
        h = h.with_coeffs(np.where(grid.kmag > 1.0 + 1e-9, h.coeffs, 0))
        if np.any(h.coeffs):
            sig = float(rng.uniform(-0.9, 0.9))
            got_t = trilinear_L(f, g, h, sig, return_complex=True)
            want_t = oracle_trilinear(f, g, h, sig)
            scale = max(abs(want_t), 1e-300)
            res["trilinear"].append(abs(got_t - want_t) / scale if abs(want_t) > 1e-14 else abs(got_t - want_t))
    maxima = {k: max(v) if v else 0.0 for k, v in res.items()}
    return SuiteReport("oracle", trials, seed, 1e-12, max(maxima.values()), [], {"max_by_operator": maxima})


def suite_littlewood_paley(trials: int, seed: int, n: int = 128) -> SuiteReport:
    grid = make_grid(n)
    j_max = int(math.floor(math.log2(grid.dealias_radius)))
    part = build_partition(grid, -1, j_max)
    worst = part.unity_residual()
    bern_fail = 0
    scale_dev = 0.0
    ortho = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        f = random_field(grid, rng, 0.6, 2.0 ** j_max * 0.9)
        for sigma in (0.5, 1.0, 1.5):
            for j in range(0, j_max + 1):
                if dyadic_block(f, j, part).norm() == 0:
                    continue
                if not bernstein_check(f, j, sigma, part).within:
                    bern_fail += 1
        r1 = besov_sobolev_ratio(f, 1.0, part)
        r2 = besov_sobolev_ratio(f * 37.5, 1.0, part)
        scale_dev = max(scale_dev, abs(r1 - r2) / r1)
        s, tot = almost_orthogonality(f, part)
        ortho.append(s / tot)
    residual = max(worst, scale_dev, float(bern_fail))
    return SuiteReport("littlewood-paley", trials, seed, 1e-12, residual, [],
                       {"unity_residual": worst, "bernstein_violations": bern_fail,
                        "besov_scale_deviation": scale_dev,
                        "orthogonality_range": [min(ortho), max(ortho)] if ortho else []})


def suite_steady_state(trials: int, seed: int, beta: float = 1.5, mu: float = 0.6, n: int = 64) -> SuiteReport:
    grid = make_grid(n)
    cfg = SimConfig(beta=beta, mu=mu, n_points=n, time_horizon=0.5, diagnostics_stride=10 ** 9)
    res = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        m = (0, 0)
        while m == (0, 0) or math.hypot(*m) > grid.dealias_radius:
            m = tuple(int(v) for v in rng.integers(-6, 7, size=2))
        th = SpectralField.mode(grid, m[0], m[1], float(rng.uniform(0.5, 2.0)), float(rng.uniform(0, 2 * np.pi)))
        res.append(_rel(run_gsqg(th, cfg).snapshots[-1], th.coeffs))
    return SuiteReport("steady-state", trials, seed, 1e-12, max(res), res, {"n": n})


def suite_convexity(trials: int, seed: int) -> SuiteReport:
    """Closed forms plus the antiderivative for the perpendicular-distance form."""
    res = [abs(convexity_integral([0.0, 0.0], [1.0, 0.0], 0.5) - 2.0) / 2.0,
           abs(convexity_integral([2.0, 0.0], [1.0, 0.0], 0.5) - 2 * (math.sqrt(3) - math.sqrt(2)))
           / (2 * (math.sqrt(3) - math.sqrt(2)))]
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        s = float(rng.uniform(0.05, 0.95))
        r = 10 ** float(rng.uniform(-3, 2))
        a, b = rng.uniform(0, 2 * np.pi, 2)
        phi = r * np.array([math.cos(a), math.sin(a)])
        th = np.array([math.cos(b), math.sin(b)])
        res.append(abs(convexity_integral(phi, th, s) - convexity_reference(phi, th, s))
                   / convexity_reference(phi, th, s))
    return SuiteReport("convexity", trials, seed, 1e-8, max(res), res)


def convexity_reference(phi, theta, s: float) -> float:
    """Closed form via int (d^2 + u^2)^(-s/2) du = u d^-s 2F1(1/2, s/2; 3/2; -u^2/d^2)."""
    from scipy.special import hyp2f1

    phi = np.asarray(phi, float)
    p = float(phi @ np.asarray(theta, float))
    d2 = max(float(phi @ phi) - p * p, 0.0)

    def G(u):
        if d2 == 0.0:
            return math.copysign(abs(u) ** (1 - s) / (1 - s), u)
        return u * d2 ** (-s / 2) * hyp2f1(0.5, s / 2, 1.5, -u * u / d2)

    return G(1.0 + p) - G(p)


SUITES: dict = {
    "flux-identity": suite_flux_identity,
    "skew-adjoint": suite_skew_adjoint,
    "oracle": suite_oracle,
    "littlewood-paley": suite_littlewood_paley,
    "steady-state": suite_steady_state,
    "convexity": suite_convexity,
}


def run_suite(name: str, trials: int, seed: int, **kw) -> SuiteReport:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](trials, seed, **kw)
