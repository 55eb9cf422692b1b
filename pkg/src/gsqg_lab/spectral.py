"""Fourier representation of real scalar fields on the periodic square [0, L)^2.

Coefficients are stored as normalized Fourier-series amplitudes on the full
N x N FFT lattice, so that

    f(x) = sum_xi  c(xi) exp(i xi . x),      xi in (2 pi / L) Z^2,

and the continuum L^2 norm is ``L * sqrt(sum |c|^2)``.  Axis 0 of every
array is the x1 direction and axis 1 is x2.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpectralField",
    "MultiplierSymbol",
    "GridError",
    "GridMismatchError",
    "AliasingError",
    "SymbolError",
    "make_grid",
    "apply_multiplier",
    "velocity_from_scalar",
    "pointwise_product",
    "derivative",
    "perp_gradient",
    "divergence",
    "laplacian",
    "sobolev_norm",
    "inner_product",
    "random_field",
]


class GridError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


class AliasingError(ValueError):
    """A product's spectral support does not fit inside the retained disc."""


class SymbolError(ValueError):
    pass


def _fft_workers() -> int:
    try:
        return max(1, int(os.environ.get("GSQG_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform N x N collocation grid on the torus of side ``side_length``."""

    n_points: int
    side_length: float = 2 * math.pi
    dealias_cutoff: float = 2.0 / 3.0

    def __post_init__(self):
        n = self.n_points
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
            raise GridError(f"n_points must be an integer, got {n!r}")
        if n < 8 or not _is_power_of_two(int(n)):
            raise GridError(f"n_points must be a power of two >= 8, got {n}")
        if not (self.side_length > 0 and math.isfinite(self.side_length)):
            raise GridError(f"side_length must be positive, got {self.side_length}")
        if not (0 < self.dealias_cutoff <= 1):
            raise GridError(f"dealias_cutoff must lie in (0, 1], got {self.dealias_cutoff}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_points, self.n_points)

    @property
    def dx(self) -> float:
        return self.side_length / self.n_points

    @property
    def base_wavenumber(self) -> float:
        return 2 * math.pi / self.side_length

    @property
    def nyquist(self) -> float:
        return math.pi * self.n_points / self.side_length

    @property
    def dealias_radius(self) -> float:
        return self.dealias_cutoff * self.nyquist

    @cached_property
    def mode_index(self) -> np.ndarray:
        # integer lattice index m with xi = (2 pi / L) m; Nyquist sits at -N/2
        return np.fft.fftfreq(self.n_points, d=1.0 / self.n_points).astype(np.int64)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-mode frequency components (xi1, xi2) as N x N arrays."""
        k = self.base_wavenumber * self.mode_index.astype(float)
        xi1, xi2 = np.meshgrid(k, k, indexing="ij")
        xi1.setflags(write=False)
        xi2.setflags(write=False)
        return xi1, xi2

    @cached_property
    def derivative_wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers for odd (derivative) symbols: Nyquist entries zeroed.

        This keeps i*xi conjugate-symmetric under xi -> -xi on the FFT lattice.
        """
        k = self.base_wavenumber * self.mode_index.astype(float)
        k[self.n_points // 2] = 0.0
        k1, k2 = np.meshgrid(k, k, indexing="ij")
        k1.setflags(write=False)
        k2.setflags(write=False)
        return k1, k2

    @cached_property
    def kmag(self) -> np.ndarray:
        xi1, xi2 = self.wavenumbers
        out = np.sqrt(xi1 * xi1 + xi2 * xi2)
        out.setflags(write=False)
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        mask = self.kmag <= self.dealias_radius * (1 + 1e-12)
        mask.setflags(write=False)
        return mask

    @cached_property
    def max_retained_wavenumber(self) -> float:
        return float(self.kmag[self.dealias_mask].max())

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n_points) * self.dx
        return np.meshgrid(x, x, indexing="ij")

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        n2 = self.n_points * self.n_points
        return sfft.ifft2(coeffs * n2, workers=_fft_workers()).real

    def to_spectral(self, values: np.ndarray) -> np.ndarray:
        n2 = self.n_points * self.n_points
        return sfft.fft2(values, workers=_fft_workers()) / n2


def make_grid(n_points: int, side_length: float = 2 * math.pi,
              dealias_cutoff: float = 2.0 / 3.0) -> Grid:
    return Grid(int(n_points) if isinstance(n_points, (int, np.integer)) else n_points,
                float(side_length), float(dealias_cutoff))


def _reflect(c: np.ndarray) -> np.ndarray:
    """Array whose entry at xi is c(-xi) on the FFT lattice."""
    return np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1))


def hermitian_defect(coeffs: np.ndarray) -> float:
    scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(coeffs - np.conj(_reflect(coeffs))))) / scale


def symmetrize(coeffs: np.ndarray) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(_reflect(coeffs)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A real scalar field held as Fourier coefficients on ``grid``."""

    grid: Grid
    coeffs: np.ndarray
    time: Optional[float] = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise GridMismatchError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        if c is self.coeffs and c.flags.writeable:
            c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray, time: Optional[float] = None) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridMismatchError(f"sample shape {values.shape} does not match grid {grid.shape}")
        return cls(grid, grid.to_spectral(values), time)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      time: Optional[float] = None) -> "SpectralField":
        x1, x2 = grid.coordinates()
        return cls.from_physical(grid, np.broadcast_to(fn(x1, x2), grid.shape), time)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "SpectralField":
        c = np.zeros(grid.shape, dtype=complex)
        c[0, 0] = value
        return cls(grid, c)

    @classmethod
    def mode(cls, grid: Grid, m1: int, m2: int, amplitude: float = 1.0, phase: float = 0.0) -> "SpectralField":
        """amplitude * cos(xi . x + phase) for the lattice mode xi = (2 pi / L)(m1, m2)."""
        n = grid.n_points
        c = np.zeros(grid.shape, dtype=complex)
        if m1 == 0 and m2 == 0:
            c[0, 0] = amplitude * math.cos(phase)
        else:
            c[m1 % n, m2 % n] += 0.5 * amplitude * np.exp(1j * phase)
            c[(-m1) % n, (-m2) % n] += 0.5 * amplitude * np.exp(-1j * phase)
        return cls(grid, c)

    def to_physical(self) -> np.ndarray:
        return self.grid.to_physical(self.coeffs)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        # takes ownership: the array is frozen in place rather than copied
        c = np.asarray(coeffs, dtype=complex)
        c.setflags(write=False)
        return SpectralField(self.grid, c, self.time)

    def with_time(self, time: Optional[float]) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs, time)

    def dealiased(self) -> "SpectralField":
        return self.with_coeffs(np.where(self.grid.dealias_mask, self.coeffs, 0))

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)

    def zero_mean(self) -> "SpectralField":
        c = self.coeffs.copy()
        c[0, 0] = 0
        return self.with_coeffs(c)

    def hermitian_defect(self) -> float:
        return hermitian_defect(self.coeffs)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermitian_defect() <= tol

    def support_radius(self, rel_tol: float = 1e-14) -> float:
        """Largest |xi| carrying a coefficient above ``rel_tol`` of the peak."""
        a = np.abs(self.coeffs)
        peak = float(a.max()) if a.size else 0.0
        if peak == 0.0:
            return 0.0
        return float(self.grid.kmag[a > rel_tol * peak].max())

    def norm(self) -> float:
        return self.grid.side_length * float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def inner(self, other: "SpectralField") -> float:
        return inner_product(self, other)

    def _check(self, other: "SpectralField"):
        if self.grid != other.grid:
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return self.with_coeffs(self.coeffs + other.coeffs)
        if np.isscalar(other):
            c = self.coeffs.copy()
            c[0, 0] += other
            return self.with_coeffs(c)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, SpectralField):
            self._check(other)
            return self.with_coeffs(self.coeffs - other.coeffs)
        if np.isscalar(other):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other) and np.isreal(other):
            return self.with_coeffs(self.coeffs * float(other))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return self.with_coeffs(self.coeffs / float(other))
        return NotImplemented


# --------------------------------------------------------------------------
# Radial multipliers


def _fractional_power(r: np.ndarray, sigma: float) -> np.ndarray:
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] ** sigma
    return out


@dataclass(frozen=True)
class MultiplierSymbol:
    """Radial Fourier symbol m(|xi|).

    ``kind`` is one of ``fractional_power``, ``log_regularizer``,
    ``constitutive``, ``custom`` or ``product``.  ``zero_mode_value`` is what
    the symbol does to the mean; ``None`` means "use the limit", which is only
    allowed when that limit is finite.
    """

    kind: str
    params: tuple = ()
    zero_mode_value: Optional[float] = None
    _fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False, repr=False)
    factors: tuple = ()

    @classmethod
    def fractional_power(cls, sigma: float, zero_mode_value: Optional[float] = None) -> "MultiplierSymbol":
        sigma = float(sigma)
        if zero_mode_value is None:
            if sigma > 0:
                zero_mode_value = 0.0
            elif sigma == 0:
                zero_mode_value = 1.0
        return cls("fractional_power", (sigma,), zero_mode_value)

    @classmethod
    def log_regularizer(cls, mu: float) -> "MultiplierSymbol":
        mu = float(mu)
        if not mu > 0.5:
            raise SymbolError(f"log regularizer needs mu > 1/2, got {mu}")
        return cls("log_regularizer", (mu,), 1.0)

    @classmethod
    def constitutive(cls, beta: float, mu: float) -> "MultiplierSymbol":
        """A = Lambda^(beta-2) p(Lambda) with p(r) = ln(e + r^2)^(-mu)."""
        beta, mu = float(beta), float(mu)
        if not 1 < beta < 2:
            raise SymbolError(f"beta must lie in (1, 2), got {beta}")
        if not mu > 0.5:
            raise SymbolError(f"mu must exceed 1/2, got {mu}")
        return cls("constitutive", (beta, mu), 0.0)

    @classmethod
    def custom_radial(cls, fn_or_table, zero_mode_value: float = 0.0, name: str = "custom") -> "MultiplierSymbol":
        """A symbol given by a callable of |xi| or by a table ``(radii, values)``."""
        if callable(fn_or_table):
            fn = fn_or_table
        else:
            radii, values = (np.asarray(a, dtype=float) for a in fn_or_table)
            fn = lambda r: np.interp(r, radii, values)  # noqa: E731
        return cls("custom", (name,), float(zero_mode_value), fn)

    @classmethod
    def identity(cls) -> "MultiplierSymbol":
        return cls.fractional_power(0.0)

    def __mul__(self, other: "MultiplierSymbol") -> "MultiplierSymbol":
        if not isinstance(other, MultiplierSymbol):
            return NotImplemented
        z0 = None
        if self.zero_mode_value is not None and other.zero_mode_value is not None:
            z0 = self.zero_mode_value * other.zero_mode_value
        elif self.zero_mode_value == 0.0 or other.zero_mode_value == 0.0:
            z0 = 0.0
        return MultiplierSymbol("product", (), z0, factors=(self, other))

    def power(self, exponent: float) -> "MultiplierSymbol":
        """|m|^exponent, e.g. the square root of the log regularizer."""
        base = self
        z0 = 0.0 if self.zero_mode_value is None else abs(self.zero_mode_value) ** exponent
        return MultiplierSymbol.custom_radial(
            lambda r: np.abs(base.at_positive(r)) ** exponent, z0, name=f"({self.kind})^{exponent}")

    def at_positive(self, r: np.ndarray) -> np.ndarray:
        """Symbol values for r > 0 (entries with r == 0 are unspecified)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "fractional_power":
            return _fractional_power(r, self.params[0])
        if self.kind == "log_regularizer":
            return np.log(math.e + r * r) ** (-self.params[0])
        if self.kind == "constitutive":
            beta, mu = self.params
            return _fractional_power(r, beta - 2.0) * np.log(math.e + r * r) ** (-mu)
        if self.kind == "custom":
            return np.asarray(self._fn(r), dtype=float)
        if self.kind == "product":
            out = np.ones_like(r)
            for f in self.factors:
                out = out * f.at_positive(r)
            return out
        raise SymbolError(f"unknown symbol kind {self.kind!r}")

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.asarray(self.at_positive(np.where(r > 0, r, 1.0)), dtype=float).copy()
        zero = r == 0
        if np.any(zero):
            if self.zero_mode_value is None:
                raise SymbolError(f"{self.kind} symbol is singular at xi = 0 and no zero_mode_value was set")
            out[zero] = self.zero_mode_value
        return out



# --------------------------------------------------------------------------
# Operations


def symbol_table(grid: Grid, m: MultiplierSymbol, mean_free: bool = False) -> np.ndarray:
    """Symbol values on every lattice mode; the zero mode gets ``zero_mode_value``."""
    k = grid.kmag
    vals = np.array(m.at_positive(np.where(k > 0, k, 1.0)), dtype=float)
    if m.zero_mode_value is None:
        if not mean_free:
            raise SymbolError(f"{m.kind} symbol is singular at xi = 0 and the field has nonzero mean")
        vals[0, 0] = 0.0
    else:
        vals[0, 0] = m.zero_mode_value
    if not np.all(np.isfinite(vals[grid.dealias_mask])):
        raise SymbolError(f"{m.kind} symbol is not finite on a retained mode")
    return vals


def apply_multiplier(f: SpectralField, m: MultiplierSymbol) -> SpectralField:
    vals = symbol_table(f.grid, m, mean_free=f.coeffs[0, 0] == 0)
    return f.with_coeffs(f.coeffs * vals)


def derivative(f: SpectralField, direction: int) -> SpectralField:
    if direction not in (1, 2):
        raise ValueError(f"direction must be 1 or 2, got {direction}")
    k = f.grid.derivative_wavenumbers[direction - 1]
    return f.with_coeffs(1j * k * f.coeffs)


def perp_gradient(f: SpectralField) -> tuple[SpectralField, SpectralField]:
    """(-d2 f, d1 f)."""
    return -derivative(f, 2), derivative(f, 1)


def gradient(f: SpectralField) -> tuple[SpectralField, SpectralField]:
    return derivative(f, 1), derivative(f, 2)


def divergence(v: Sequence[SpectralField]) -> SpectralField:
    v1, v2 = v
    v1._check(v2)
    return derivative(v1, 1) + derivative(v2, 2)


def laplacian(f: SpectralField) -> SpectralField:
    k = f.grid.kmag
    return f.with_coeffs(-(k * k) * f.coeffs)


def velocity_from_scalar(q: SpectralField, beta: float, mu: float) -> tuple[SpectralField, SpectralField]:
    """v = -perp_grad(A q) with A = Lambda^(beta-2) p(Lambda)."""
    aq = apply_multiplier(q, MultiplierSymbol.constitutive(beta, mu))
    p1, p2 = perp_gradient(aq)
    return -p1, -p2


def _product_fits(f: SpectralField, g: SpectralField) -> bool:
    radius = f.grid.dealias_radius * (1 + 1e-12)
    if f.support_radius() + g.support_radius() <= radius:
        return True
    # exact check: evaluate the product on a doubled grid, where no aliasing occurs
    n = f.grid.n_points
    big = 2 * n
    pf = np.zeros((big, big), complex)
    pg = np.zeros((big, big), complex)
    idx = np.fft.fftfreq(n, 1.0 / n).astype(int) % big
    pf[np.ix_(idx, idx)] = f.coeffs
    pg[np.ix_(idx, idx)] = g.coeffs
    prod = sfft.fft2(sfft.ifft2(pf) * sfft.ifft2(pg)) * big * big
    m = np.fft.fftfreq(big, 1.0 / big) * f.grid.base_wavenumber
    kk = np.sqrt(m[:, None] ** 2 + m[None, :] ** 2)
    outside = np.sum(np.abs(prod[kk > radius]) ** 2)
    total = np.sum(np.abs(prod) ** 2)
    return total == 0 or outside <= 1e-24 * total


def pointwise_product(f: SpectralField, g: SpectralField, exact: bool = False) -> SpectralField:
    """Product evaluated on the collocation grid, then truncated to the dealias disc.

    With ``exact=True`` an AliasingError is raised unless the full product
    spectrum lies inside the retained disc (so nothing is truncated).
    """
    f._check(g)
    if exact and not _product_fits(f, g):
        raise AliasingError("combined spectral support exceeds the dealias disc")
    grid = f.grid
    prod = grid.to_spectral(grid.to_physical(f.coeffs) * grid.to_physical(g.coeffs))
    return f.with_coeffs(np.where(grid.dealias_mask, prod, 0))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """Real L^2 inner product over the torus."""
    f._check(g)
    L = f.grid.side_length
    return float(L * L * np.sum((f.coeffs * np.conj(g.coeffs)).real))


def sobolev_norm(f: SpectralField, sigma: float, homogeneous: bool = True) -> float:
    grid = f.grid
    k2 = grid.kmag ** 2
    a2 = np.abs(f.coeffs) ** 2
    if homogeneous:
        # round-off means from sampled data are tolerated
        if sigma < 0 and abs(f.coeffs[0, 0]) > 1e-14 * max(float(np.abs(f.coeffs).max()), 1e-300):
            raise SymbolError("homogeneous norm of negative order needs a mean-free field")
        w = np.zeros_like(k2)
        pos = k2 > 0
        w[pos] = k2[pos] ** sigma
    else:
        w = (1.0 + k2) ** sigma
    L = grid.side_length
    return L * float(np.sqrt(np.sum(w * a2)))


def random_field(grid: Grid, rng: np.random.Generator, kmin: float, kmax: float,
                 amplitude: float = 1.0) -> SpectralField:
    """Band-limited random field with complex Gaussian coefficients on kmin <= |xi| <= kmax.

    Coefficients are drawn on a lattice box sized by ``kmax`` alone, so the
    same generator state yields the same field on any sufficiently fine grid.
    """
    base = grid.base_wavenumber
    M = int(math.floor(kmax / base))
    n = grid.n_points
    if M >= n // 2:
        raise GridError(f"kmax={kmax} is not resolved by an {n}-point grid")
    m = np.arange(-M, M + 1)
    m1, m2 = np.meshgrid(m, m, indexing="ij")
    r = base * np.sqrt(m1 ** 2 + m2 ** 2)
    z = rng.standard_normal(m1.shape) + 1j * rng.standard_normal(m1.shape)
    z = np.where((r >= kmin) & (r <= kmax), z, 0)
    # Hermitian symmetrize on the box; the box is symmetric about the origin
    z = 0.5 * (z + np.conj(z[::-1, ::-1]))
    c = np.zeros(grid.shape, complex)
    c[np.ix_(m % n, m % n)] = z
    out = SpectralField(grid, c)
    nrm = out.norm()
    if nrm == 0:
        return out
    return out * (amplitude / nrm)
