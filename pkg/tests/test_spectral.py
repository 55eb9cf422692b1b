import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsqg_lab.spectral import (AliasingError, GridError, GridMismatchError, MultiplierSymbol, SpectralField,
                               SymbolError, apply_multiplier, derivative, divergence, inner_product, make_grid,
                               perp_gradient, pointwise_product, random_field, sobolev_norm, symbol_table,
                               velocity_from_scalar)
from gsqg_lab.verify import oracle_product, random_sparse_field

G64 = make_grid(64)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def field(grid, fn):
    return SpectralField.from_function(grid, fn)


def seeds():
    return st.integers(min_value=0, max_value=2 ** 32 - 1)


# ---------------------------------------------------------------- grid


def test_grid_small():
    g = make_grid(8, 2 * math.pi, 2 / 3)
    m = g.mode_index
    assert np.abs(m).max() == 4
    assert g.dealias_radius == pytest.approx(8 / 3)


def test_grid_256_disc():
    g = make_grid(256)
    assert g.shape == (256, 256)
    assert g.dealias_radius == pytest.approx(85.333, abs=1e-3)


@pytest.mark.parametrize("n", [7, 0, 12, 4])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(GridError):
        make_grid(n)


def test_grid_rejects_bad_length():
    with pytest.raises(GridError):
        make_grid(16, -1.0)


def test_nyquist_zeroed_in_derivative():
    k1, k2 = G64.derivative_wavenumbers
    assert np.all(k1[32, :] == 0) and np.all(k2[:, 32] == 0)


# ---------------------------------------------------------------- transforms


@settings(max_examples=25, deadline=None)
@given(seeds())
def test_round_trip(seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(G64.shape)
    back = SpectralField.from_physical(G64, u).to_physical()
    assert rel(back, u) <= 1e-13


@settings(max_examples=25, deadline=None)
@given(seeds())
def test_plancherel(seed):
    f = random_field(G64, np.random.default_rng(seed), 0.0, 15.0, 3.0)
    phys = math.sqrt(np.sum(f.to_physical() ** 2) * G64.dx ** 2)
    assert abs(phys - f.norm()) / f.norm() <= 1e-12


def test_hermitian_fields():
    f = random_field(G64, np.random.default_rng(1), 1.0, 10.0)
    assert f.is_hermitian()
    assert np.max(np.abs(f.to_physical().imag if np.iscomplexobj(f.to_physical()) else 0)) == 0


def test_grid_mismatch():
    a = SpectralField.zeros(make_grid(16))
    b = SpectralField.zeros(make_grid(32))
    with pytest.raises(GridMismatchError):
        a + b


# ---------------------------------------------------------------- multipliers


def test_fractional_power_mode():
    f = field(G64, lambda x, y: np.cos(3 * x))
    out = apply_multiplier(f, MultiplierSymbol.fractional_power(0.5))
    assert rel(out.coeffs, math.sqrt(3) * f.coeffs) <= 1e-14


def test_log_regularizer_mode():
    f = field(G64, lambda x, y: np.cos(x))
    out = apply_multiplier(f, MultiplierSymbol.log_regularizer(1.0))
    factor = 1.0 / math.log(math.e + 1.0)
    assert factor == pytest.approx(0.7615, abs=1e-4)
    assert rel(out.coeffs, factor * f.coeffs) <= 1e-14


def test_log_regularizer_values():
    r = np.array([0.5, 1.0, 7.0, 100.0])
    got = MultiplierSymbol.log_regularizer(0.8)(r)
    assert np.allclose(got, np.log(np.e + r ** 2) ** -0.8, rtol=1e-15, atol=0)


def test_constitutive_kills_constant():
    out = apply_multiplier(SpectralField.constant(G64, 1.0), MultiplierSymbol.constitutive(1.5, 0.6))
    assert np.all(out.coeffs == 0)


def test_constitutive_values():
    r = np.array([1.0, 3.0, 40.0])
    got = MultiplierSymbol.constitutive(1.5, 0.6)(r)
    assert np.allclose(got, r ** -0.5 * np.log(np.e + r ** 2) ** -0.6, rtol=1e-14, atol=0)


@pytest.mark.parametrize("mu", [0.5, 0.2, -1.0])
def test_log_regularizer_mu_range(mu):
    with pytest.raises(SymbolError):
        MultiplierSymbol.log_regularizer(mu)


@pytest.mark.parametrize("beta", [1.0, 2.0, 0.5])
def test_constitutive_beta_range(beta):
    with pytest.raises(SymbolError):
        MultiplierSymbol.constitutive(beta, 0.6)


def test_singular_symbol_needs_mean_free():
    m = MultiplierSymbol.fractional_power(-0.5, zero_mode_value=None)
    if m.zero_mode_value is None:
        with pytest.raises(SymbolError):
            apply_multiplier(SpectralField.constant(G64, 1.0), m)


@settings(max_examples=20, deadline=None)
@given(seeds(), st.floats(-3, 3), st.floats(-3, 3))
def test_multiplier_linear_and_commuting(seed, a, b):
    rng = np.random.default_rng(seed)
    f = random_field(G64, rng, 1.0, 12.0)
    g = random_field(G64, rng, 1.0, 12.0)
    m1 = MultiplierSymbol.constitutive(1.3, 0.9)
    m2 = MultiplierSymbol.fractional_power(0.7)
    lhs = apply_multiplier(f * a + g * b, m1)
    rhs = apply_multiplier(f, m1) * a + apply_multiplier(g, m1) * b
    assert np.allclose(lhs.coeffs, rhs.coeffs, rtol=0, atol=1e-13 * (abs(a) + abs(b) + 1))
    ab = apply_multiplier(apply_multiplier(f, m1), m2)
    ba = apply_multiplier(apply_multiplier(f, m2), m1)
    assert np.allclose(ab.coeffs, ba.coeffs, rtol=0, atol=1e-15)


# ---------------------------------------------------------------- derivatives, velocity


def test_derivative_cos():
    f = field(G64, lambda x, y: np.cos(x))
    want = field(G64, lambda x, y: -np.sin(x))
    assert rel(derivative(f, 1).coeffs, want.coeffs) <= 1e-14


def test_perp_gradient_cos():
    v1, v2 = perp_gradient(field(G64, lambda x, y: np.cos(y)))
    assert rel(v1.coeffs, field(G64, lambda x, y: np.sin(y)).coeffs) <= 1e-14
    assert np.max(np.abs(v2.coeffs)) <= 1e-16


def test_derivative_bad_direction():
    with pytest.raises(ValueError):
        derivative(SpectralField.zeros(G64), 3)


@settings(max_examples=20, deadline=None)
@given(seeds())
def test_div_perp_grad_zero(seed):
    f = random_field(G64, np.random.default_rng(seed), 0.0, 20.0)
    assert np.max(np.abs(divergence(perp_gradient(f)).coeffs)) <= 1e-14


def test_velocity_single_mode():
    q = field(G64, lambda x, y: np.cos(y))
    v1, v2 = velocity_from_scalar(q, 1.5, 0.6)
    want = field(G64, lambda x, y: -math.log(math.e + 1) ** -0.6 * np.sin(y))
    assert rel(v1.coeffs, want.coeffs) <= 1e-14
    assert np.max(np.abs(v2.coeffs)) <= 1e-16


def test_velocity_of_constant():
    v1, v2 = velocity_from_scalar(SpectralField.constant(G64, 4.2), 1.5, 0.6)
    assert not np.any(v1.coeffs) and not np.any(v2.coeffs)


@settings(max_examples=20, deadline=None)
@given(seeds(), st.floats(1.05, 1.95), st.floats(0.55, 3.0))
def test_velocity_divergence_free(seed, beta, mu):
    q = random_field(G64, np.random.default_rng(seed), 0.0, 20.0)
    v = velocity_from_scalar(q, beta, mu)
    scale = max(np.max(np.abs(v[0].coeffs)), 1e-300)
    assert np.max(np.abs(divergence(v).coeffs)) <= 1e-14 * scale


# ---------------------------------------------------------------- products


def test_product_square_cos():
    f = field(G64, lambda x, y: np.cos(x))
    want = field(G64, lambda x, y: 0.5 * (1 + np.cos(2 * x)))
    assert rel(pointwise_product(f, f).coeffs, want.coeffs) <= 1e-14


def test_product_identity_element():
    f = random_field(G64, np.random.default_rng(3), 0.0, 15.0)
    one = SpectralField.constant(G64, 1.0)
    assert rel(pointwise_product(f, one).coeffs, f.coeffs) <= 1e-14


def test_product_eight_point_oracle():
    g8 = make_grid(8)
    f = field(g8, lambda x, y: np.cos(3 * x))
    g = field(g8, lambda x, y: np.cos(2 * x))
    got = pointwise_product(f, g)
    want = oracle_product(f, g)
    assert np.max(np.abs(got.coeffs - want.coeffs)) <= 1e-12 * np.max(np.abs(want.coeffs) + 1e-300) + 1e-16


@settings(max_examples=50, deadline=None)
@given(seeds())
def test_product_matches_oracle(seed):
    g8 = make_grid(8)
    rng = np.random.default_rng(seed)
    f = random_sparse_field(g8, rng, 2, g8.dealias_radius, allow_mean=True)
    g = random_sparse_field(g8, rng, 2, g8.dealias_radius, allow_mean=True)
    want = oracle_product(f, g).coeffs
    got = pointwise_product(f, g).coeffs
    assert np.linalg.norm(got - want) <= 1e-12 * max(np.linalg.norm(want), 1e-300) + 1e-15


def test_exact_product_rejects_aliasing():
    f = field(G64, lambda x, y: np.cos(20 * x))
    with pytest.raises(AliasingError):
        pointwise_product(f, f, exact=True)


def test_product_dealiased():
    f = field(G64, lambda x, y: np.cos(15 * x) + np.cos(18 * y))
    out = pointwise_product(f, f)
    assert np.all(out.coeffs[~G64.dealias_mask] == 0)


# ---------------------------------------------------------------- norms


@pytest.mark.parametrize("sigma", [-0.5, 0.0, 0.5, 1.0, 2.5])
def test_sobolev_single_mode(sigma):
    f = field(G64, lambda x, y: np.cos(2 * x))
    assert sobolev_norm(f, sigma) == pytest.approx(2 ** sigma * math.sqrt(2 * math.pi ** 2), rel=1e-14)


@pytest.mark.parametrize("sigma", [-1.0, 0.0, 1.7])
def test_sobolev_zero(sigma):
    assert sobolev_norm(SpectralField.zeros(G64), sigma) == 0.0
    assert sobolev_norm(SpectralField.zeros(G64), sigma, homogeneous=False) == 0.0


def test_sobolev_negative_needs_mean_free():
    with pytest.raises(SymbolError):
        sobolev_norm(SpectralField.constant(G64, 1.0), -0.5)


@settings(max_examples=25, deadline=None)
@given(seeds())
def test_h1_plancherel(seed):
    f = random_field(G64, np.random.default_rng(seed), 0.0, 18.0)
    lhs = sobolev_norm(f, 1.0) ** 2
    rhs = derivative(f, 1).norm() ** 2 + derivative(f, 2).norm() ** 2
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_inhomogeneous_weight():
    f = field(G64, lambda x, y: 1.0 + np.cos(3 * y))
    want = 2 * math.pi * math.sqrt(1.0 + 0.5 * 10.0 ** 1.5)
    assert sobolev_norm(f, 1.5, homogeneous=False) == pytest.approx(want, rel=1e-14)


def test_inner_product_matches_quadrature():
    rng = np.random.default_rng(9)
    f = random_field(G64, rng, 0.0, 10.0)
    g = random_field(G64, rng, 0.0, 10.0)
    quad = float(np.sum(f.to_physical() * g.to_physical()) * G64.dx ** 2)
    assert inner_product(f, g) == pytest.approx(quad, rel=1e-12, abs=1e-14)


def test_random_field_grid_independent():
    a = random_field(make_grid(32), np.random.default_rng(5), 1.0, 6.0)
    b = random_field(make_grid(64), np.random.default_rng(5), 1.0, 6.0)
    assert a.norm() == pytest.approx(b.norm(), rel=1e-14)
    assert sobolev_norm(a, 2.0) == pytest.approx(sobolev_norm(b, 2.0), rel=1e-13)


def test_symbol_table_zero_mode():
    tab = symbol_table(G64, MultiplierSymbol.constitutive(1.5, 0.6))
    assert tab[0, 0] == 0
