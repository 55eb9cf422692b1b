import math

import numpy as np
import pytest

from gsqg_lab.spectral import SpectralField, make_grid
from gsqg_lab.verify import (SUITES, oracle_flux, oracle_product, random_sparse_field, run_suite, sparse_modes)

G8 = make_grid(8)


def test_sparse_field_properties():
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = random_sparse_field(G8, rng, 2, G8.dealias_radius)
        assert f.is_hermitian()
        assert 0 < len(sparse_modes(f)) <= 4
        assert f.mean == 0


def test_oracle_product_hand():
    f = SpectralField.mode(G8, 1, 0)
    g = SpectralField.mode(G8, 0, 1)
    got = oracle_product(f, g)
    # cos x1 cos x2 has four coefficients of 1/4
    assert np.allclose(np.abs(got.coeffs[[1, 1, 7, 7], [1, 7, 1, 7]]), 0.25)
    assert np.sum(np.abs(got.coeffs) > 0) == 4


def test_oracle_flux_zero_q():
    F = oracle_flux(SpectralField.zeros(G8), SpectralField.mode(G8, 1, 1), 1.5, 0.6)
    assert not np.any(F[0].coeffs) and not np.any(F[1].coeffs)


@pytest.mark.parametrize("name,trials", [("flux-identity", 10), ("skew-adjoint", 10), ("oracle", 30),
                                         ("littlewood-paley", 3), ("steady-state", 3), ("convexity", 30)])
def test_suites_pass(name, trials):
    rep = run_suite(name, trials, seed=1)
    assert rep.passed, (name, rep.max_residual, rep.details)
    js = rep.to_json()
    assert js["suite"] == name and js["passed"]


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suite("nope", 1, 0)


def test_suite_registry():
    assert set(SUITES) == {"flux-identity", "skew-adjoint", "oracle", "littlewood-paley", "steady-state",
                           "convexity"}
