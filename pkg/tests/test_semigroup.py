import math

import numpy as np
import pytest

from tentlab.coeffs import make_constant, make_rough, polyharmonic
from tentlab.grid import field_from_function, lp_norm, make_grid
from tentlab.semigroup import Semigroup, lp_contraction_ratio, trajectory


@pytest.fixture
def heat():
    g = make_grid(1, 512, 64.0)
    return Semigroup(polyharmonic(g, 1))


def test_heat_kernel_is_gaussian(heat):
    t = 1.0
    k = heat.kernel(t).values[0].real
    x = heat.grid.axis()
    exact = np.exp(-x ** 2 / (4 * t)) / math.sqrt(4 * math.pi * t)
    np.testing.assert_allclose(k, exact, atol=1e-14)


def test_heat_kernel_mass_and_positivity(heat):
    k = heat.kernel(0.5).values[0].real
    assert k.sum() * heat.grid.cell_volume == pytest.approx(1.0, rel=1e-12)
    assert k.min() > -1e-15


def test_biharmonic_kernel_changes_sign():
    S = Semigroup(polyharmonic(make_grid(1, 512, 64.0), 2))
    k = S.kernel(1.0).values[0].real
    assert k.min() < -0.02
    assert k.sum() * S.grid.cell_volume == pytest.approx(1.0, rel=1e-12)


def test_semigroup_law_system():
    g = make_grid(2, 32, 8.0)
    rng = np.random.default_rng(0)
    A0 = np.eye(4) * 2 + 0.3 * rng.standard_normal((4, 4))
    S = Semigroup(make_constant(A0, g, 1, N=2))
    f = field_from_function(g, lambda x, y: np.exp(-x ** 2 - 2 * y ** 2), components=2)
    a = S.apply(0.3, S.apply(0.2, f)).values
    b = S.apply(0.5, f).values
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_semigroup_rejects_negative_time_and_variable_coefficients(heat):
    f = field_from_function(heat.grid, lambda x: np.exp(-x ** 2))
    with pytest.raises(ValueError):
        heat.apply(-1.0, f)
    assert heat.apply(0.0, f) is f
    with pytest.raises(ValueError):
        Semigroup(make_rough(0, 4.0, heat.grid, 1))


def test_kernel_unresolved(heat):
    with pytest.raises(ValueError, match="unresolved"):
        heat.kernel(1e-4)


def test_kernel_fit_recovers_gaussian_rate(heat):
    fit = heat.kernel_bound_fit([0.5, 1.0, 2.0])
    assert fit.c2 == pytest.approx(0.25, rel=0.02)
    assert fit.prefactors[0] == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-6)


def test_heat_is_lp_contraction(heat):
    f = field_from_function(heat.grid, lambda x: np.where(np.abs(x) < 1, 1.0, 0.0))
    for p in (1.0, 1.5, 2.0, 4.0):
        assert lp_contraction_ratio(heat, 0.5, f, p) <= 1 + 1e-12


def test_trajectory_matches_apply(heat):
    f = field_from_function(heat.grid, lambda x: np.exp(-x ** 2))
    u = trajectory(heat, f, [0.0, 0.25, 1.0])
    np.testing.assert_array_equal(u.values[0], f.values)
    np.testing.assert_allclose(u.values[2], heat.apply(1.0, f).values, atol=1e-15)
    # exact Gaussian evolution: width 1/4 + t
    t = 1.0
    x = heat.grid.axis()
    exact = np.exp(-x ** 2 / (1 + 4 * t)) / math.sqrt(1 + 4 * t)
    np.testing.assert_allclose(u.values[2, 0].real, exact, atol=1e-12)
    assert lp_norm(u.slice(2), 2) < lp_norm(f, 2)
