"""Time integration of the log-regularized gSQG equation and its linear flux form.

The transport nonlinearity is always written through the two-term flux

    F_q(theta) = (perp_grad A q) theta + A((perp_grad theta) q),   A = Lambda^(beta-2) p(Lambda),

so ``rhs`` for the nonlinear problem is ``-Div F_{-theta}(theta)`` and the
linear conservation law simply freezes ``q`` as a prescribed path.  Internally
everything runs on raw coefficient arrays; ``SpectralField`` is the boundary type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .spectral import (Grid, GridMismatchError, MultiplierSymbol, SpectralField, make_grid, symbol_table)

__all__ = [
    "SimConfig",
    "ClawProblem",
    "Trajectory",
    "IntegrationError",
    "CFLError",
    "DegenerateError",
    "ConstantPath",
    "PiecewiseLinearPath",
    "HermitePath",
    "MollifiedPath",
    "flux",
    "div_flux",
    "advection",
    "rhs",
    "step",
    "cfl_dt",
    "run_gsqg",
    "run_claw",
    "flux_bound_check",
    "hs_norm",
    "path_from_trajectory",
]


class IntegrationError(RuntimeError):
    """Non-finite state or a collapsed time step."""


class CFLError(IntegrationError):
    pass


class DegenerateError(ValueError):
    """A ratio diagnostic with a vanishing denominator."""


@dataclass(frozen=True)
class SimConfig:
    beta: float = 1.5
    mu: float = 0.6
    n_points: int = 256
    side_length: float = 2 * math.pi
    dealias_cutoff: float = 2.0 / 3.0
    time_horizon: float = 1.0
    cfl_factor: float = 0.5
    viscosity: float = 0.0
    diagnostics_stride: int = 1
    norm_exponents: Optional[tuple] = None
    dt: Optional[float] = None
    blowup_factor: float = 10.0
    keep_snapshots: bool = True

    def __post_init__(self):
        if not 1 < self.beta < 2:
            raise ValueError(f"beta must lie in (1, 2) for the well-posedness regime, got {self.beta}")
        if not self.mu > 0.5:
            raise ValueError(f"mu must exceed 1/2 for the logarithmic regularization, got {self.mu}")
        if not self.time_horizon > 0:
            raise ValueError("time_horizon must be positive")
        if not 0 < self.cfl_factor <= 1:
            raise ValueError("cfl_factor must lie in (0, 1]")
        if not self.viscosity >= 0:
            raise ValueError("viscosity must be nonnegative")
        if self.diagnostics_stride < 1:
            raise ValueError("diagnostics_stride must be a positive integer")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("a fixed dt must be positive")
        if self.norm_exponents is not None:
            object.__setattr__(self, "norm_exponents", tuple(float(s) for s in self.norm_exponents))

    @property
    def sigmas(self) -> tuple:
        if self.norm_exponents is not None:
            return self.norm_exponents
        return (1.0, self.beta, self.beta + 1.0)

    def grid(self) -> Grid:
        return make_grid(self.n_points, self.side_length, self.dealias_cutoff)

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["norm_exponents"] = list(self.sigmas)
        return d


# --------------------------------------------------------------------------
# Spectral kernel


class _Kernel:
    """Precomputed tables for one (grid, beta, mu)."""

    def __init__(self, grid: Grid, beta: float, mu: float):
        self.grid = grid
        self.a = symbol_table(grid, MultiplierSymbol.constitutive(beta, mu), mean_free=True)
        k1, k2 = grid.derivative_wavenumbers
        self.ik1 = 1j * k1
        self.ik2 = 1j * k2
        self.mask = grid.dealias_mask
        self.k2 = grid.kmag ** 2

    def phys(self, c: np.ndarray) -> np.ndarray:
        return self.grid.to_physical(c)

    def coeffs(self, u: np.ndarray) -> np.ndarray:
        return np.where(self.mask, self.grid.to_spectral(u), 0)

    def flux(self, qc: np.ndarray, tc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        aq = self.a * qc
        w1, w2 = self.phys(-self.ik2 * aq), self.phys(self.ik1 * aq)
        th = self.phys(tc)
        g1, g2 = self.phys(-self.ik2 * tc), self.phys(self.ik1 * tc)
        qp = self.phys(qc)
        f1 = self.coeffs(w1 * th) + self.a * self.coeffs(g1 * qp)
        f2 = self.coeffs(w2 * th) + self.a * self.coeffs(g2 * qp)
        return f1, f2

    def div_flux(self, qc: np.ndarray, tc: np.ndarray) -> np.ndarray:
        f1, f2 = self.flux(qc, tc)
        return self.ik1 * f1 + self.ik2 * f2

    def velocity(self, qc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Physical v = -perp_grad(A q)."""
        aq = self.a * qc
        return self.phys(self.ik2 * aq), self.phys(-self.ik1 * aq)

    def advection(self, tc: np.ndarray) -> np.ndarray:
        u1, u2 = self.velocity(tc)
        return self.coeffs(u1 * self.phys(self.ik1 * tc) + u2 * self.phys(self.ik2 * tc))

    def max_speed(self, qc: np.ndarray) -> float:
        u1, u2 = self.velocity(qc)
        return float(np.sqrt(np.max(u1 * u1 + u2 * u2)))


@lru_cache(maxsize=8)
def _kernel(grid: Grid, beta: float, mu: float) -> _Kernel:
    return _Kernel(grid, beta, mu)


def _same_grid(*fields: SpectralField) -> Grid:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError("fields live on different grids")
    return g


def flux(q: SpectralField, theta: SpectralField, beta: float, mu: float) -> tuple[SpectralField, SpectralField]:
    """F_q(theta) as a pair of fields."""
    grid = _same_grid(q, theta)
    f1, f2 = _kernel(grid, beta, mu).flux(q.coeffs, theta.coeffs)
    return theta.with_coeffs(f1), theta.with_coeffs(f2)


def div_flux(q: SpectralField, theta: SpectralField, beta: float, mu: float) -> SpectralField:
    grid = _same_grid(q, theta)
    return theta.with_coeffs(_kernel(grid, beta, mu).div_flux(q.coeffs, theta.coeffs))


def advection(theta: SpectralField, beta: float, mu: float) -> SpectralField:
    """u . grad theta with u = -perp_grad(A theta)."""
    return theta.with_coeffs(_kernel(theta.grid, beta, mu).advection(theta.coeffs))


def _check_finite(c: np.ndarray, where: str):
    if not np.all(np.isfinite(c)):
        raise IntegrationError(f"non-finite coefficients encountered in {where}")


def rhs(theta: SpectralField, cfg: SimConfig) -> SpectralField:
    """-Div F_{-theta}(theta) + nu Laplacian(theta)."""
    ker = _kernel(theta.grid, cfg.beta, cfg.mu)
    out = _gsqg_rhs(ker, theta.coeffs, cfg.viscosity)
    _check_finite(out, "rhs")
    return theta.with_coeffs(out)


def _gsqg_rhs(ker: _Kernel, c: np.ndarray, nu: float) -> np.ndarray:
    out = -ker.div_flux(-c, c)
    if nu:
        out = out - nu * ker.k2 * c
    return out


def _rk4(f: Callable, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + (0.5 * dt) * k1)
    k3 = f(t + 0.5 * dt, y + (0.5 * dt) * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _dt_limit(ker: _Kernel, speed: float, cfl: float, nu: float) -> float:
    dx = ker.grid.dx
    dt = cfl * dx / max(speed, 1e-14)
    if nu > 0:
        dt = min(dt, dx * dx / (4.0 * nu))
    return dt


def cfl_dt(theta: SpectralField, cfg: SimConfig) -> float:
    ker = _kernel(theta.grid, cfg.beta, cfg.mu)
    return _dt_limit(ker, ker.max_speed(theta.coeffs), cfg.cfl_factor, cfg.viscosity)


def step(theta: SpectralField, dt: float, cfg: SimConfig) -> SpectralField:
    """One classical Runge-Kutta step of the gSQG equation."""
    limit = cfl_dt(theta, cfg)
    if dt > limit * (1 + 1e-12):
        raise CFLError(f"dt={dt:.3e} exceeds the stability limit {limit:.3e}")
    ker = _kernel(theta.grid, cfg.beta, cfg.mu)
    out = _rk4(lambda t, c: _gsqg_rhs(ker, c, cfg.viscosity), 0.0, theta.coeffs, dt)
    _check_finite(out, "step")
    t0 = theta.time
    return theta.with_coeffs(out).with_time(None if t0 is None else t0 + dt)


# --------------------------------------------------------------------------
# Norms and diagnostics


def _weights(grid: Grid, sigma: float) -> np.ndarray:
    return (1.0 + grid.kmag ** 2) ** sigma


def hs_norm(c: np.ndarray, grid: Grid, sigma: float) -> float:
    """Inhomogeneous H^sigma norm of a coefficient array (or stack, summed)."""
    return grid.side_length * math.sqrt(float(np.sum(_weights(grid, sigma) * np.abs(c) ** 2)))


@dataclass
class Trajectory:
    times: list
    snapshots: list
    l2: list
    mean: list
    hnorms: dict
    gronwall: dict
    flux_residual: list
    derivatives: list = field(default_factory=list, repr=False)
    steps: int = 0
    aborted: bool = False
    abort_reason: str = ""
    t_star: Optional[float] = None
    grid: Optional[Grid] = field(default=None, repr=False)

    @property
    def gronwall_ratio(self) -> list:
        """Largest ratio over the tracked exponents at each record."""
        sig = list(self.gronwall)
        return [max(self.gronwall[s][i] for s in sig) for i in range(len(self.times))]

    def field_at(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.snapshots[i], time=self.times[i])

    @property
    def final(self) -> SpectralField:
        return self.field_at(len(self.times) - 1)

    def l2_drift(self) -> float:
        return max(abs(v - self.l2[0]) for v in self.l2) / self.l2[0] if self.l2[0] else 0.0

    def max_gronwall(self, sigma: Optional[float] = None) -> float:
        if sigma is None:
            return max(self.gronwall_ratio)
        return max(self.gronwall[sigma])


class _Recorder:
    def __init__(self, grid: Grid, sigmas, keep: bool, beta: float):
        self.grid = grid
        self.sigmas = tuple(sigmas)
        self.keep = keep
        self.w = {s: _weights(grid, s) for s in self.sigmas}
        self.w_crit = _weights(grid, beta + 1.0)
        self.traj = Trajectory([], [], [], [], {s: [] for s in self.sigmas}, {s: [] for s in self.sigmas}, [],
                               grid=grid)

    def norm(self, c, w) -> float:
        return self.grid.side_length * math.sqrt(float(np.sum(w * (c.real ** 2 + c.imag ** 2))))

    def record(self, t: float, c: np.ndarray, transport: np.ndarray, q: np.ndarray, residual: float):
        tr = self.traj
        L = self.grid.side_length
        tr.times.append(float(t))
        tr.l2.append(L * math.sqrt(float(np.sum(np.abs(c) ** 2))))
        tr.mean.append(float(c[0, 0].real))
        qn = self.norm(q, self.w_crit)
        for s in self.sigmas:
            n = self.norm(c, self.w[s])
            tr.hnorms[s].append(n)
            rate = 2.0 * L * L * float(np.sum(self.w[s] * (c * np.conj(transport)).real))
            den = qn * n * n
            tr.gronwall[s].append(rate / den if den > 0 else 0.0)
        tr.flux_residual.append(residual)
        if self.keep:
            tr.snapshots.append(c.copy())
            tr.derivatives.append(transport.copy())


def _integrate(grid: Grid, c0: np.ndarray, cfg: SimConfig, ker: _Kernel,
               coeff_at: Callable[[float, np.ndarray], np.ndarray],
               forcing: Optional[Callable[[float], np.ndarray]], nu: float,
               residual_fn: Optional[Callable[[np.ndarray], float]]) -> Trajectory:
    """Shared stepping loop; ``coeff_at(t, theta)`` supplies q."""

    def transport(t, c):
        return -ker.div_flux(coeff_at(t, c), c)

    def f(t, c):
        out = transport(t, c)
        if nu:
            out = out - nu * ker.k2 * c
        if forcing is not None:
            out = out + forcing(t)
        return out

    rec = _Recorder(grid, cfg.sigmas, cfg.keep_snapshots, cfg.beta)
    T = cfg.time_horizon
    t, c = 0.0, np.array(c0, dtype=complex)
    crit0 = hs_norm(c, grid, cfg.beta + 1.0)
    traj = rec.traj

    def record(t, c):
        q = coeff_at(t, c)
        res = residual_fn(c) if residual_fn is not None else float("nan")
        rec.record(t, c, transport(t, c), q, res)

    record(t, c)
    n = 0
    while t < T * (1 - 1e-14):
        limit = _dt_limit(ker, ker.max_speed(coeff_at(t, c)), cfg.cfl_factor, nu)
        if cfg.dt is not None:
            if cfg.dt > limit * (1 + 1e-12):
                raise CFLError(f"fixed dt={cfg.dt:.3e} exceeds the stability limit {limit:.3e} at t={t:.4g}")
            dt = cfg.dt
        else:
            dt = limit
        if dt < 1e-12 * T:
            raise CFLError(f"time step collapsed to {dt:.3e} at t={t:.4g}")
        last = t + dt >= T * (1 - 1e-12)
        if last:
            dt = T - t
        c = _rk4(f, t, c, dt)
        _check_finite(c, f"step {n + 1} at t={t:.4g}")
        t = T if last else t + dt
        n += 1
        crit = hs_norm(c, grid, cfg.beta + 1.0)
        if traj.t_star is None and crit0 > 0 and crit > 2.0 * crit0:
            traj.t_star = t
        blown = crit0 > 0 and crit > cfg.blowup_factor * crit0
        if last or blown or n % cfg.diagnostics_stride == 0:
            record(t, c)
        if blown:
            traj.aborted = True
            traj.abort_reason = (f"H^{cfg.beta + 1:g} norm {crit:.4g} exceeded {cfg.blowup_factor:g}x "
                                 f"its initial value at t={t:.4g}")
            break
    traj.steps = n
    return traj


def run_gsqg(theta0: SpectralField, cfg: SimConfig) -> Trajectory:
    """Integrate the gSQG equation to ``cfg.time_horizon`` with full diagnostics."""
    grid = theta0.grid
    ker = _kernel(grid, cfg.beta, cfg.mu)

    def residual(c):
        a = ker.div_flux(-c, c)
        b = ker.advection(c)
        nb = float(np.sqrt(np.sum(np.abs(b) ** 2)))
        nd = float(np.sqrt(np.sum(np.abs(a - b) ** 2)))
        return nd / nb if nb > 0 else nd

    return _integrate(grid, theta0.coeffs, cfg, ker, lambda t, c: -c, None, cfg.viscosity, residual)


# --------------------------------------------------------------------------
# Time-dependent coefficient paths


class CoefficientPath:
    grid: Grid

    def coeffs_at(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t: float) -> SpectralField:
        return SpectralField(self.grid, self.coeffs_at(t), time=t)


class ConstantPath(CoefficientPath):
    def __init__(self, f: SpectralField):
        self.grid = f.grid
        self._c = f.coeffs

    def coeffs_at(self, t: float) -> np.ndarray:
        return self._c


def _stack(fields: Sequence) -> tuple[Grid, np.ndarray]:
    if not fields:
        raise ValueError("a path needs at least one field")
    grid = fields[0].grid
    for f in fields:
        if f.grid != grid:
            raise GridMismatchError("path fields live on different grids")
    return grid, np.stack([f.coeffs for f in fields])


class PiecewiseLinearPath(CoefficientPath):
    """Linear interpolation between snapshots, held constant outside the knot range."""

    def __init__(self, times: Sequence[float], fields: Sequence[SpectralField]):
        self.times = np.asarray(times, dtype=float)
        if len(self.times) != len(fields):
            raise ValueError("times and fields differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("knot times must be strictly increasing")
        self.grid, self.values = _stack(fields)

    def hat_weights(self, t) -> np.ndarray:
        """Weights of each knot at times ``t`` (shape (len(t), n_knots))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tk = self.times
        K = len(tk)
        w = np.zeros((len(t), K))
        if K == 1:
            w[:, 0] = 1.0
            return w
        tc = np.clip(t, tk[0], tk[-1])
        i = np.clip(np.searchsorted(tk, tc, side="right") - 1, 0, K - 2)
        frac = (tc - tk[i]) / (tk[i + 1] - tk[i])
        rows = np.arange(len(t))
        w[rows, i] = 1.0 - frac
        w[rows, i + 1] += frac
        return w

    def coeffs_at(self, t: float) -> np.ndarray:
        w = self.hat_weights(t)[0]
        return np.tensordot(w, self.values, axes=1)


class HermitePath(CoefficientPath):
    """Cubic Hermite interpolation from values and time derivatives."""

    def __init__(self, times: Sequence[float], values: np.ndarray, derivatives: np.ndarray, grid: Grid):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values)
        self.derivs = np.asarray(derivatives)
        self.grid = grid
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("knot times must be strictly increasing")

    def coeffs_at(self, t: float) -> np.ndarray:
        tk = self.times
        if t <= tk[0]:
            return self.values[0]
        if t >= tk[-1]:
            return self.values[-1]
        i = int(np.clip(np.searchsorted(tk, t, side="right") - 1, 0, len(tk) - 2))
        h = tk[i + 1] - tk[i]
        s = (t - tk[i]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.values[i] + h10 * h * self.derivs[i]
                + h01 * self.values[i + 1] + h11 * h * self.derivs[i + 1])


def mollifier(r) -> np.ndarray:
    """Unnormalized bump exp(-1/(1-r^2)) on (-1, 1)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


class MollifiedPath(CoefficientPath):
    """Time mollification of a piecewise-linear path with a bump of half-width 1/n.

    The path is extended as a constant outside its knot range before
    convolving, so the mollified path reproduces a constant path exactly.
    """

    _order = 24

    def __init__(self, base: PiecewiseLinearPath, n: float):
        if not n > 0:
            raise ValueError("mollification level must be positive")
        self.base = base
        self.grid = base.grid
        self.n = float(n)
        self.width = 1.0 / self.n
        self._x, self._w = np.polynomial.legendre.leggauss(self._order)

    def weights(self, t: float) -> np.ndarray:
        h = self.width
        tk = self.base.times
        inner = tk[(tk > t - h) & (tk < t + h)]
        edges = np.unique(np.concatenate([[t - h, t + h], inner]))
        a, b = edges[:-1], edges[1:]
        s = (0.5 * (b - a))[:, None] * (self._x[None, :] + 1) + a[:, None]
        ws = (0.5 * (b - a))[:, None] * self._w[None, :]
        rho = mollifier((t - s) / h) * ws
        hats = self.base.hat_weights(s.ravel())
        out = rho.ravel() @ hats
        return out / rho.sum()

    def coeffs_at(self, t: float) -> np.ndarray:
        return np.tensordot(self.weights(t), self.base.values, axes=1)


def path_from_trajectory(traj: Trajectory, sign: float = -1.0, kind: str = "hermite") -> CoefficientPath:
    """q-path sign * theta(t) rebuilt from stored snapshots."""
    if not traj.snapshots:
        raise ValueError("trajectory was run without snapshots")
    vals = sign * np.stack(traj.snapshots)
    if kind == "hermite":
        return HermitePath(traj.times, vals, sign * np.stack(traj.derivatives), traj.grid)
    if kind == "linear":
        return PiecewiseLinearPath(traj.times, [SpectralField(traj.grid, v) for v in vals])
    raise ValueError(f"unknown path kind {kind!r}")


@dataclass
class ClawProblem:
    """Data of the linear law d_t theta + Div F_q(theta) = G - nu (-Laplacian) theta."""

    theta0: SpectralField
    q_path: CoefficientPath
    G_path: Optional[CoefficientPath] = None
    viscosity: float = 0.0

    def __post_init__(self):
        grids = [self.theta0.grid, self.q_path.grid] + ([self.G_path.grid] if self.G_path is not None else [])
        if any(g != grids[0] for g in grids):
            raise GridMismatchError("theta0, q and G must share one grid")
        if self.viscosity < 0:
            raise ValueError("viscosity must be nonnegative")


def run_claw(prob: ClawProblem, cfg: SimConfig) -> Trajectory:
    grid = prob.theta0.grid
    ker = _kernel(grid, cfg.beta, cfg.mu)
    forcing = None if prob.G_path is None else prob.G_path.coeffs_at
    return _integrate(grid, prob.theta0.coeffs, cfg, ker, lambda t, c: prob.q_path.coeffs_at(t), forcing,
                      prob.viscosity, None)


def flux_bound_check(q: SpectralField, theta: SpectralField, beta: float, mu: float) -> float:
    """||Div F_q(theta)||_{H^beta} / (||q||_{H^beta} ||theta||_{H^(beta+1)})."""
    grid = _same_grid(q, theta)
    den = hs_norm(q.coeffs, grid, beta) * hs_norm(theta.coeffs, grid, beta + 1.0)
    if den == 0:
        raise DegenerateError("q or theta vanishes")
    return hs_norm(div_flux(q, theta, beta, mu).coeffs, grid, beta) / den
