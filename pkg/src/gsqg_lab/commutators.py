"""Commutator brackets, trilinear functionals and randomized constant estimates.

Every bracket here has the form ``[T, g] f = T(g f) - g T f`` for a Fourier
multiplier T, which in frequency is the convolution

    sum_eta  (m(xi) - m(xi - eta)) f^(xi - eta) g^(eta).

Products are required to be alias-free (``AliasingError`` otherwise), so the
brackets are exact on the lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .littlewood_paley import DyadicPartition, build_partition
from .spectral import (Grid, MultiplierSymbol, SpectralField, inner_product, make_grid,
                       pointwise_product, sobolev_norm, symbol_table)

__all__ = [
    "LemmaParams",
    "ConstantReport",
    "commutator_bracket",
    "trilinear_L",
    "localized_commutator",
    "convexity_integral",
    "convexity_majorant",
    "convexity_sweep",
    "estimate_constant",
    "annulus_index",
]

LEMMAS = ("2.3", "3.1", "3.2", "3.3", "3.4")


def _symbol_bracket(table: np.ndarray, g: SpectralField, f: SpectralField) -> SpectralField:
    gf = pointwise_product(g, f, exact=True)
    tf = f.with_coeffs(table * f.coeffs)
    gtf = pointwise_product(g, tf, exact=True)
    return f.with_coeffs(table * gf.coeffs - gtf.coeffs)


def _derivative_symbol(grid: Grid, direction: int) -> np.ndarray:
    if direction not in (1, 2):
        raise ValueError(f"direction must be 1 or 2, got {direction}")
    return 1j * grid.derivative_wavenumbers[direction - 1]


def _power_table(grid: Grid, exponent: float) -> np.ndarray:
    k = grid.kmag
    out = np.zeros(grid.shape)
    pos = k > 0
    out[pos] = k[pos] ** exponent
    return out


def bracket_symbol(grid: Grid, P: MultiplierSymbol, s: float, direction: int) -> np.ndarray:
    """Lattice symbol of Lambda^-s P(D) d_l, zero at the origin."""
    table = _power_table(grid, -s) * symbol_table(grid, P, mean_free=True) * _derivative_symbol(grid, direction)
    table[0, 0] = 0
    return table


def commutator_bracket(P: MultiplierSymbol, s: float, direction: int,
                       g: SpectralField, f: SpectralField) -> SpectralField:
    """[Lambda^-s P(D) d_l, g] f."""
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    return _symbol_bracket(bracket_symbol(f.grid, P, s, direction), g, f)


def annulus_index(h: SpectralField, rel_tol: float = 1e-14) -> int:
    """Index j with supp h^ inside the open annulus (2^(j-1), 2^(j+1)); ValueError if none."""
    a = np.abs(h.coeffs)
    peak = a.max()
    if peak == 0:
        raise ValueError("h is identically zero")
    k = h.grid.kmag[a > rel_tol * peak]
    rmin, rmax = float(k.min()), float(k.max())
    if rmin == 0:
        raise ValueError("h has a nonzero mean, so it is not annulus-supported")
    j = math.floor(math.log2(rmax))
    # smallest j with rmax < 2^(j+1)
    while 2.0 ** (j + 1) <= rmax:
        j += 1
    while 2.0 ** j > rmax:
        j -= 1
    if not 2.0 ** (j - 1) < rmin:
        raise ValueError(f"support radii [{rmin:g}, {rmax:g}] do not fit in one dyadic annulus")
    return j


def trilinear_L(f: SpectralField, g: SpectralField, h: SpectralField, sigma: float,
                return_complex: bool = False):
    """sum |xi|^sigma (f^ * g^)(xi) conj(h^(xi)), scaled as an L^2 pairing."""
    if not -1 < sigma < 1:
        raise ValueError(f"sigma must lie in (-1, 1), got {sigma}")
    annulus_index(h)
    fg = pointwise_product(f, g)
    L = f.grid.side_length
    val = L * L * np.sum(_power_table(f.grid, sigma) * fg.coeffs * np.conj(h.coeffs))
    return complex(val) if return_complex else float(val.real)


def localized_symbol(grid: Grid, part: DyadicPartition, j: int, exponent: float, P: MultiplierSymbol,
                     derivative_kind: str, direction: int = 1) -> np.ndarray:
    """Symbol of Lambda^exponent P(D) D Delta_j, with D = Lambda or d_l."""
    if derivative_kind == "lambda":
        d = grid.kmag.astype(complex)
    elif derivative_kind == "partial":
        d = _derivative_symbol(grid, direction)
    else:
        raise ValueError(f"derivative_kind must be 'lambda' or 'partial', got {derivative_kind!r}")
    table = part.phi_j(j) * _power_table(grid, exponent) * symbol_table(grid, P, mean_free=True) * d
    table[0, 0] = 0
    return table


def localized_commutator(s: float, rho: float, P: MultiplierSymbol, derivative_kind: str, j: int,
                         g: SpectralField, f: SpectralField, part: DyadicPartition,
                         direction: int = 1) -> SpectralField:
    """[Lambda^(s+rho) P(D) D Delta_j, g] f."""
    table = localized_symbol(f.grid, part, j, s + rho, P, derivative_kind, direction)
    return _symbol_bracket(table, g, f)


# --------------------------------------------------------------------------
# Convexity integral


def convexity_majorant(phi_norm, s: float):
    """Closed form of int_0^1 | |phi| - tau |^-s dtau, which dominates the convexity integral."""
    a = np.asarray(phi_norm, dtype=float)
    e = 1.0 - s
    inside = (np.power(a, e) + np.power(np.abs(1.0 - a), e)) / e
    outside = (np.power(a, e) - np.power(np.maximum(a - 1.0, 0.0), e)) / e
    return np.where(a <= 1.0, inside, outside)


def _gauss_panels(n_total: int, order: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights on [0, 1] over geometrically graded panels accumulating at 0."""
    n_panels = max(2, n_total // order)
    x, w = np.polynomial.legendre.leggauss(order)
    # ratio 2^(-1/4) keeps panels short near t = 1, where large 1/(1-s) makes the integrand steep
    edges = np.concatenate([[0.0], 2.0 ** (-0.25 * np.arange(n_panels - 1, -1, -1, dtype=float))])
    a, b = edges[:-1], edges[1:]
    nodes = (0.5 * (b - a))[:, None] * (x[None, :] + 1.0) + a[:, None]
    weights = (0.5 * (b - a))[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def convexity_integral(phi, theta, s: float, quadrature_n: int = 10_000) -> float:
    """int_0^1 |phi + tau theta|^-s dtau for a unit vector theta and 0 < s < 1.

    The interval is split at the foot tau* of the perpendicular from the origin
    (clamped to [0, 1]); on each side tau - tau* = len * t^(1/(1-s)) removes
    the algebraic singularity and graded Gauss panels resolve the rest.
    """
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    return float(convexity_integrals(np.atleast_2d(np.asarray(phi, float)),
                                     np.atleast_2d(np.asarray(theta, float)), s, quadrature_n)[0])


def convexity_integrals(phi: np.ndarray, theta: np.ndarray, s: float, quadrature_n: int = 10_000) -> np.ndarray:
    """Vectorized form of :func:`convexity_integral` over rows of ``phi`` and ``theta``."""
    if not 0 < s < 1:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    norms = np.linalg.norm(theta, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise ValueError("theta must be a unit vector")
    proj = np.einsum("ij,ij->i", phi, theta)
    tau_c = -proj
    perp2 = np.maximum(np.einsum("ij,ij->i", phi, phi) - proj * proj, 0.0)
    tau_star = np.clip(tau_c, 0.0, 1.0)
    offset = np.abs(tau_c - tau_star)
    q = 1.0 / (1.0 - s)
    t, w = _gauss_panels(quadrature_n // 2)
    tq = t ** q
    jac = q * t ** (q - 1.0) * w
    total = np.zeros(len(phi))
    for length in (1.0 - tau_star, tau_star):
        u = length[:, None] * tq[None, :] + offset[:, None]
        dist2 = perp2[:, None] + u * u
        with np.errstate(divide="ignore"):
            vals = np.where(dist2 > 0, dist2 ** (-0.5 * s), 0.0)
        # at dist == 0 the integrand times the Jacobian stays finite; the node
        # t = 0 is never sampled by Gauss points, so the guard is belt and braces
        total += length * np.sum(vals * jac[None, :], axis=1)
    return total


# --------------------------------------------------------------------------
# Constant estimation


@dataclass(frozen=True)
class LemmaParams:
    """Exponents and operator choices for one commutator lemma."""

    lemma_id: str
    s: float = 0.5
    sigma: float = 0.5
    eps: float = 0.0
    nu: float = 0.5
    rho: float = 0.0
    beta: float = 1.5
    mu: float = 0.6
    multiplier: str = "log"
    direction: int = 1
    derivative_kind: str = "lambda"
    k: int = 2
    j_range: tuple = (0, 5)
    coherence: float = 1.0
    side_length: float = 4 * math.pi

    def validate(self) -> "LemmaParams":
        lid = self.lemma_id
        if lid not in LEMMAS:
            raise ValueError(f"unknown lemma {lid!r}; expected one of {LEMMAS}")
        if self.direction not in (1, 2):
            raise ValueError("direction must be 1 or 2")
        if lid == "2.3":
            if not (-1 < self.sigma < 1 and 0 < self.eps < 2 and self.sigma > self.eps - 1):
                raise ValueError("lemma 2.3 needs sigma in (-1,1), eps in (0,2), sigma > eps - 1")
        elif lid == "3.1":
            if not (0 < self.s < 1 and 0 <= self.eps < 1 and self.eps + self.s <= 1):
                raise ValueError("lemma 3.1 needs s in (0,1), eps in [0,1), eps + s <= 1")
            if self.k <= 0:
                raise ValueError("lemma 3.1 needs k > 0")
        elif lid == "3.2":
            if not 0 < self.s < 1:
                raise ValueError("lemma 3.2 needs s in (0,1)")
        elif lid == "3.3":
            if not (0 < self.s < 1 and 0 < self.eps < 1 and self.eps + self.s <= 1):
                raise ValueError("lemma 3.3 needs s, eps in (0,1) with eps + s <= 1")
        elif lid == "3.4":
            if not (0 <= self.s < 1 and 0 < self.nu < 1):
                raise ValueError("lemma 3.4 needs s in [0,1), nu in (0,1)")
            if self.derivative_kind not in ("lambda", "partial"):
                raise ValueError("derivative_kind must be 'lambda' or 'partial'")
        lo, hi = self.j_range
        if lo > hi:
            raise ValueError("j_range must be increasing")
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")
        if not 0 <= self.coherence <= 1:
            raise ValueError("coherence must lie in [0, 1]")
        return self

    def symbol(self) -> MultiplierSymbol:
        if self.multiplier == "log":
            return MultiplierSymbol.log_regularizer(self.mu)
        if self.multiplier == "sqrt-log":
            return MultiplierSymbol.log_regularizer(self.mu).power(0.5)
        if self.multiplier == "identity":
            return MultiplierSymbol.identity()
        raise ValueError(f"unknown multiplier {self.multiplier!r}")

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["j_range"] = list(self.j_range)
        return d

    @classmethod
    def defaults(cls, lemma_id: str) -> "LemmaParams":
        if lemma_id == "2.3":
            return cls("2.3", sigma=0.5, eps=0.5)
        if lemma_id == "3.1":
            return cls("3.1", s=0.5, eps=0.0, k=2, multiplier="identity")
        if lemma_id == "3.2":
            return cls("3.2", s=0.5)
        if lemma_id == "3.3":
            return cls("3.3", s=0.5, eps=0.1, multiplier="identity")
        if lemma_id == "3.4":
            return cls("3.4", s=0.5, rho=0.0, nu=0.5, multiplier="identity", derivative_kind="lambda")
        raise ValueError(f"unknown lemma {lemma_id!r}")


@dataclass
class ConstantReport:
    params: LemmaParams
    n_trials: int
    ratios: list
    trial_blocks: list
    per_block_cj: list = field(default_factory=list)
    cj_l2_norm: float = float("nan")
    envelope: dict = field(default_factory=dict)
    scaling_slope: float = float("nan")
    skipped: int = 0

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else float("nan")

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else float("nan")

    def to_json(self) -> dict:
        return {
            "lemma": self.params.lemma_id,
            "params": self.params.to_json(),
            "trials": self.n_trials,
            "skipped": self.skipped,
            "max_ratio": self.max_ratio,
            "mean_ratio": self.mean_ratio,
            "scaling_slope": self.scaling_slope,
            "envelope": {str(j): v for j, v in sorted(self.envelope.items())},
            "per_block": self.per_block_cj,
            "cj_l2_norm": self.cj_l2_norm,
            "ratios": self.ratios,
            "trial_blocks": self.trial_blocks,
        }


_GRIDS: dict = {}


def _grid_for_radius(radius: float, side_length: float) -> Grid:
    """Smallest grid of the given side whose dealias disc holds ``radius``."""
    base = 2 * math.pi / side_length
    n = 16
    while (2.0 / 3.0) * (n / 2) * base < radius * (1 + 1e-12):
        n *= 2
    key = (n, side_length)
    if key not in _GRIDS:
        _GRIDS.clear()  # one live grid keeps the memory footprint flat
        _GRIDS[key] = make_grid(n, side_length)
    return _GRIDS[key]


def packet(grid: Grid, rng: np.random.Generator, rmin: float, rmax: float,
           coherence: float = 1.0, center: Optional[Sequence[float]] = None) -> SpectralField:
    """Random real field with spectrum on rmin < |xi| < rmax.

    Moduli are those of complex Gaussians; phases are a random translation
    exp(-i xi.x0) blended with fully random phases by ``1 - coherence``.  With
    coherence 1 the field is a spatially concentrated wave packet, the shape
    that saturates convolution (Young) bounds.
    """
    base = grid.base_wavenumber
    M = int(math.floor(rmax / base))
    n = grid.n_points
    m = np.arange(-M, M + 1)
    m1, m2 = np.meshgrid(m, m, indexing="ij")
    xi1, xi2 = base * m1, base * m2
    r = np.hypot(xi1, xi2)
    sel = (r > rmin) & (r < rmax)
    z = rng.standard_normal(m1.shape) + 1j * rng.standard_normal(m1.shape)
    modulus = 0.5 * (np.abs(z) + np.abs(z[::-1, ::-1]))
    x0 = rng.uniform(0, grid.side_length, size=2) if center is None else np.asarray(center, float)
    wild = rng.uniform(-np.pi, np.pi, size=m1.shape)
    wild = 0.5 * (wild - wild[::-1, ::-1])
    phase = -(xi1 * x0[0] + xi2 * x0[1]) + (1.0 - coherence) * wild
    c_box = np.where(sel, modulus * np.exp(1j * phase), 0)
    c = np.zeros(grid.shape, complex)
    c[np.ix_(m % n, m % n)] = c_box
    out = SpectralField(grid, c)
    nrm = out.norm()
    return out if nrm == 0 else out / nrm


def _annulus_mask(grid: Grid, j: int) -> np.ndarray:
    k = grid.kmag
    return (k > 2.0 ** (j - 1)) & (k < 2.0 ** (j + 1))


def _optimal_h(b: SpectralField, mask: Optional[np.ndarray], weight_exponent: float = 0.0) -> SpectralField:
    """Test function maximizing |<b, h>| / ||h||_{H^a} among h supported on ``mask``."""
    c = b.coeffs if mask is None else np.where(mask, b.coeffs, 0)
    if weight_exponent:
        c = c * _power_table(b.grid, -2.0 * weight_exponent)
    return b.with_coeffs(c)


def _trial(params: LemmaParams, j: int, rng: np.random.Generator) -> Optional[float]:
    lid = params.lemma_id
    coh = params.coherence
    # all fields of a trial share one center so their packets overlap
    x0 = rng.uniform(0, params.side_length, size=2)
    s = params.s
    H = sobolev_norm
    if lid == "2.3":
        # high-high or low-high interactions feeding the annulus A_j
        shift = int(rng.integers(-1, 1))
        lo_f, hi_f = 2.0 ** (j - 2 + shift), 2.0 ** (j + shift)
        lo_g, hi_g = 2.0 ** (j - 2), 2.0 ** j
        grid = _grid_for_radius(max(hi_f + hi_g, 2.0 ** (j + 1)), params.side_length)
        f = packet(grid, rng, lo_f, hi_f, coh, x0)
        g = packet(grid, rng, lo_g, hi_g, coh, x0)
        fg = pointwise_product(f, g, exact=True)
        weighted = fg.with_coeffs(_power_table(grid, params.sigma) * fg.coeffs)
        h = _optimal_h(weighted, _annulus_mask(grid, j))
        num = abs(trilinear_L(f, g, h, params.sigma)) if h.norm() > 0 else 0.0
        e = params.eps
        den = 2.0 ** (e * j) * min(H(f, 1 - e) * H(g, params.sigma), H(g, 1 - e) * H(f, params.sigma)) * h.norm()
    elif lid == "3.1":
        i = j + int(rng.integers(-min(params.k, 1), min(params.k, 1) + 1))
        lo_g, hi_g = 2.0 ** (min(i, j) - 2), 2.0 ** (max(i, j) + 1)
        grid = _grid_for_radius(2.0 ** (i + 1) + hi_g, params.side_length)
        f = packet(grid, rng, 2.0 ** (i - 1), 2.0 ** (i + 1), coh, x0)
        g = packet(grid, rng, lo_g, hi_g, coh, x0)
        b = commutator_bracket(params.symbol(), s, params.direction, g, f)
        h = _optimal_h(b, _annulus_mask(grid, j))
        num = abs(inner_product(b, h))
        den = H(g, 2 - s - params.eps) * H(f, params.eps) * h.norm()
    elif lid == "3.3":
        lo, hi = 2.0 ** (j - 1), 2.0 ** (j + 1)
        grid = _grid_for_radius(2 * hi, params.side_length)
        f = packet(grid, rng, lo, hi, coh, x0)
        g = packet(grid, rng, lo, hi, coh, x0)
        b = commutator_bracket(params.symbol(), s, params.direction, g, f)
        h = _optimal_h(b, None)
        num = abs(inner_product(b, h))
        e = params.eps
        first = H(g, 2 - s + e, homogeneous=False) * f.norm() * h.norm()
        second = H(g, 2 - s, homogeneous=False) * (H(f, e) * h.norm() + H(h, e) * f.norm())
        den = min(first, second)
    elif lid == "3.4":
        lo, hi = 2.0 ** (j - 1), 2.0 ** (j + 1)
        grid = _grid_for_radius(2 * hi, params.side_length)
        part = build_partition(grid, j - 1, j + 1)
        f = packet(grid, rng, lo, hi, coh, x0)
        g = packet(grid, rng, lo, hi, coh, x0)
        b = localized_commutator(s, params.rho, params.symbol(), params.derivative_kind, j, g, f, part,
                                 params.direction)
        a = params.rho + params.nu
        h = _optimal_h(b, _annulus_mask(grid, j), a)
        num = abs(inner_product(b, h))
        nu = params.nu
        den = min(H(f, 1 - nu) * H(g, s + 1), H(f, s) * H(g, 2 - nu)) * H(h, a)
    else:
        raise ValueError(f"lemma {lid} has no field trial")
    if not (den > 0 and math.isfinite(den)) or num == 0:
        return None
    return num / den


def _convexity_trial(params: LemmaParams, j: int, rng: np.random.Generator) -> float:
    # |phi| drawn log-uniformly in the dyadic bin [2^(j-3), 2^(j-2))
    radius = 2.0 ** (j - 3 + rng.uniform())
    ang = rng.uniform(0, 2 * np.pi, size=2)
    phi = radius * np.array([math.cos(ang[0]), math.sin(ang[0])])
    theta = np.array([math.cos(ang[1]), math.sin(ang[1])])
    return convexity_integral(phi, theta, params.s)


def convexity_sweep(s: float, n_samples: int = 10_000, seed: int = 0, phi_max: float = 1e3,
                    quadrature_n: int = 10_000) -> dict:
    """Random (phi, theta) sweep with |phi| log-uniform on [1e-3, phi_max].

    Returns the samples, the envelope over all samples and over |phi| > 2,
    and the closed-form majorant evaluated at each sample.
    """
    rng = np.random.default_rng([seed, n_samples])
    radius = 10.0 ** rng.uniform(-3, math.log10(phi_max), n_samples)
    a, b = rng.uniform(0, 2 * np.pi, (2, n_samples))
    phi = radius[:, None] * np.stack([np.cos(a), np.sin(a)], axis=1)
    theta = np.stack([np.cos(b), np.sin(b)], axis=1)
    values = np.concatenate([convexity_integrals(phi[i:i + 500], theta[i:i + 500], s, quadrature_n)
                             for i in range(0, n_samples, 500)])
    far = radius > 2
    return {
        "s": s,
        "phi_norm": radius,
        "values": values,
        "majorant": convexity_majorant(radius, s),
        "envelope": float(values.max()),
        "envelope_far": float(values[far].max()) if far.any() else float("nan"),
        "bound": 2.0 / (1.0 - s) + 2.0,
    }


def _fit_slope(envelope: dict) -> float:
    js = np.array(sorted(envelope), dtype=float)
    if len(js) < 2:
        return float("nan")
    vals = np.log2([envelope[j] for j in sorted(envelope)])
    return float(np.polyfit(js, vals, 1)[0])


def estimate_constant(params: LemmaParams, n_trials: int, seed: int, threads: int = 1) -> ConstantReport:
    """Randomized estimate of a lemma's constant across dyadic blocks.

    Trials are split into contiguous, equally sized runs, one per block, and
    trial t draws from its own generator seeded by (seed, t), so results do not
    depend on execution order.
    """
    params.validate()
    lo, hi = params.j_range
    blocks = list(range(lo, hi + 1))
    trial_fn = _convexity_trial if params.lemma_id == "3.2" else _trial

    def run(t: int):
        j = blocks[t * len(blocks) // n_trials]
        rng = np.random.default_rng([seed, t])
        return j, trial_fn(params, j, rng)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, range(n_trials)))
    else:
        results = [run(t) for t in range(n_trials)]

    ratios, trial_blocks, skipped = [], [], 0
    envelope: dict = {}
    for j, r in results:
        if r is None or not math.isfinite(r):
            skipped += 1
            continue
        ratios.append(float(r))
        trial_blocks.append(j)
        envelope[j] = max(envelope.get(j, 0.0), float(r))
    env_vals = np.array([envelope[j] for j in sorted(envelope)])
    l2 = float(np.sqrt(np.sum(env_vals ** 2))) if len(env_vals) else float("nan")
    cj = [float(v / l2) for v in env_vals] if len(env_vals) else []
    return ConstantReport(params, n_trials, ratios, trial_blocks, cj, l2, envelope, _fit_slope(envelope), skipped)
