"""Dyadic Littlewood-Paley blocks and the estimates built on them.

The profiles come from one smooth radial cutoff ``psi`` (1 on [0, 1/2],
0 on [1, inf)):

    chi(r) = psi(r),    phi(r) = psi(r / 2) - psi(r),

so supp chi is inside the unit ball, supp phi inside the annulus (1/2, 2),
and chi_{j0} + sum_{j0 <= j <= J} phi_j telescopes to psi(2^-(J+1) r), which
is identically 1 for r <= 2^J.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .spectral import (Grid, GridError, MultiplierSymbol, SpectralField, apply_multiplier,
                       pointwise_product, sobolev_norm)

__all__ = [
    "smooth_cutoff",
    "bump",
    "DyadicPartition",
    "build_partition",
    "dyadic_block",
    "low_pass",
    "besov_norm",
    "bernstein_check",
    "product_estimate_check",
    "RatioReport",
    "CoverageError",
]


class CoverageError(ValueError):
    """The field has energy the dyadic range does not account for."""


def _transition(t: np.ndarray) -> np.ndarray:
    # exp(-1/t) for t > 0, else 0
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_cutoff(r) -> np.ndarray:
    """C-infinity radial cutoff: 1 for r <= 1/2, 0 for r >= 1."""
    r = np.asarray(r, dtype=float)
    t = np.clip(2.0 * r - 1.0, 0.0, 1.0)
    a = _transition(1.0 - t)
    b = _transition(t)
    return a / (a + b)


def bump(r) -> np.ndarray:
    """Annular profile phi(r) = psi(r/2) - psi(r), supported in (1/2, 2)."""
    r = np.asarray(r, dtype=float)
    return smooth_cutoff(0.5 * r) - smooth_cutoff(r)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    grid: Grid
    j_min: int
    j_max: int
    phi: dict = field(repr=False)
    chi_min: np.ndarray = field(repr=False)

    @property
    def indices(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def phi_j(self, j: int) -> np.ndarray:
        self._check_index(j)
        return self.phi[j]

    def chi_j(self, j: int) -> np.ndarray:
        self._check_index(j)
        if j == self.j_min:
            return self.chi_min
        return self._chi_tables[j]

    @cached_property
    def _chi_tables(self) -> dict:
        k = self.grid.kmag
        return {j: smooth_cutoff(k * 2.0 ** (-j)) for j in self.indices}

    def _check_index(self, j: int):
        if not (self.j_min <= j <= self.j_max):
            raise IndexError(f"block {j} outside partition range [{self.j_min}, {self.j_max}]")

    @cached_property
    def coverage(self) -> np.ndarray:
        """sum_j phi_j on the lattice (1 on the fully covered shell)."""
        total = np.zeros(self.grid.shape)
        for j in self.indices:
            total = total + self.phi[j]
        return total

    def unity_residual(self) -> float:
        """max |chi_{j_min} + sum phi_j - 1| over retained modes with |xi| <= 2^j_max."""
        k = self.grid.kmag
        sel = self.grid.dealias_mask & (k <= 2.0 ** self.j_max)
        return float(np.max(np.abs(self.chi_min + self.coverage - 1.0)[sel]))

    def annulus(self, j: int) -> tuple[float, float]:
        return 2.0 ** (j - 1), 2.0 ** (j + 1)


def build_partition(grid: Grid, j_min: int, j_max: int) -> DyadicPartition:
    if j_min >= j_max:
        raise ValueError(f"need j_min < j_max, got ({j_min}, {j_max})")
    if 2.0 ** j_max > grid.dealias_radius:
        raise GridError(
            f"2^{j_max} = {2.0 ** j_max:g} exceeds the largest retained wavenumber "
            f"{grid.dealias_radius:.4g} of this grid")
    k = grid.kmag
    phi = {}
    for j in range(j_min, j_max + 1):
        tab = bump(k * 2.0 ** (-j))
        tab.setflags(write=False)
        phi[j] = tab
    chi = smooth_cutoff(k * 2.0 ** (-j_min))
    chi.setflags(write=False)
    return DyadicPartition(grid, int(j_min), int(j_max), phi, chi)


def dyadic_block(f: SpectralField, j: int, part: DyadicPartition) -> SpectralField:
    return f.with_coeffs(f.coeffs * part.phi_j(j))


def low_pass(f: SpectralField, j: int, part: DyadicPartition) -> SpectralField:
    return f.with_coeffs(f.coeffs * part.chi_j(j))


def uncovered_fraction(f: SpectralField, part: DyadicPartition) -> float:
    """Relative L^2 energy of f - sum_j Delta_j f."""
    rest = f.coeffs * (1.0 - part.coverage)
    total = float(np.sum(np.abs(f.coeffs) ** 2))
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(rest) ** 2)) / total


def block_norms(f: SpectralField, part: DyadicPartition) -> dict:
    return {j: dyadic_block(f, j, part).norm() for j in part.indices}


def besov_norm(f: SpectralField, sigma: float, part: DyadicPartition, tol: float = 1e-10) -> float:
    """Homogeneous B^sigma_{2,2} norm over the partition's dyadic range."""
    leak = uncovered_fraction(f, part)
    if leak > tol:
        raise CoverageError(
            f"{leak:.3e} of the energy lies outside blocks {part.j_min}..{part.j_max}")
    acc = 0.0
    for j, nj in block_norms(f, part).items():
        acc += (2.0 ** (j * sigma) * nj) ** 2
    return math.sqrt(acc)


@dataclass
class BernsteinRatio:
    j: int
    sigma: float
    ratio: float
    reciprocal: float

    @property
    def bounds(self) -> tuple[float, float]:
        s = abs(self.sigma)
        return 2.0 ** (-s), 2.0 ** s

    @property
    def within(self) -> bool:
        lo, hi = self.bounds
        slack = 1e-12
        return all(lo * (1 - slack) <= r <= hi * (1 + slack) for r in (self.ratio, self.reciprocal))


def bernstein_check(f: SpectralField, j: int, sigma: float, part: DyadicPartition) -> BernsteinRatio:
    block = dyadic_block(f, j, part)
    base = block.norm()
    if base == 0:
        raise ValueError(f"block {j} of the field is identically zero")
    lifted = apply_multiplier(block, MultiplierSymbol.fractional_power(sigma, zero_mode_value=0.0)).norm()
    ratio = lifted / (2.0 ** (sigma * j) * base)
    return BernsteinRatio(j, sigma, ratio, 1.0 / ratio)


@dataclass
class RatioReport:
    """Summary of a randomized ratio study, serializable as a JSON record."""

    lemma: str
    params: dict
    trials: int
    ratios: list
    per_block: list = field(default_factory=list)
    skipped: int = 0

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else float("nan")

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else float("nan")

    def to_json(self) -> dict:
        return {
            "lemma": self.lemma,
            "params": self.params,
            "trials": self.trials,
            "skipped": self.skipped,
            "max_ratio": self.max_ratio,
            "mean_ratio": self.mean_ratio,
            "per_block": self.per_block,
        }


def product_estimate_check(f: SpectralField, g: SpectralField, s: float, t: float) -> Optional[float]:
    """||fg||_{H^(s+t-1)} / (||f||_{H^s} ||g||_{H^t}) in homogeneous norms.

    Returns None for a degenerate (0/0) configuration.  The mean of fg is
    dropped before taking the negative-order norm.
    """
    if not (s < 1 and t < 1 and s + t > 0):
        raise ValueError(f"exponents need s, t < 1 and s + t > 0, got s={s}, t={t}")
    den = sobolev_norm(f, s) * sobolev_norm(g, t)
    if den == 0:
        return None
    fg = pointwise_product(f.zero_mean(), g.zero_mean()).zero_mean()
    return sobolev_norm(fg, s + t - 1) / den


def besov_sobolev_ratio(f: SpectralField, sigma: float, part: DyadicPartition) -> float:
    """||f||_{H^sigma} / ||f||_{B^sigma_{2,2}}."""
    return sobolev_norm(f, sigma) / besov_norm(f, sigma, part)


def almost_orthogonality(f: SpectralField, part: DyadicPartition) -> tuple[float, float]:
    """(sum_j ||Delta_j f||^2 + ||S_{j_min} f||^2, ||f||^2)."""
    blocks = sum(n * n for n in block_norms(f, part).values())
    low = low_pass(f, part.j_min, part).norm() ** 2
    return blocks + low, f.norm() ** 2
