import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tentlab.grid import (Field, SpaceTimeField, ball_average, ball_mean_sq, count_multi_indices,
                          derivative, field_from_function, gn_check, grad_m_values, lp_norm,
                          make_ball, make_grid, multi_indices, poincare_check)


def test_grid_geometry():
    g = make_grid(2, 16, 4.0)
    assert g.spacing == 0.25
    assert g.shape == (16, 16)
    assert g.cell_volume == 0.0625
    x = g.axis()
    assert x[g.origin_index[0]] == 0.0
    assert x[0] == -2.0


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        make_grid(3, 16, 1.0)
    with pytest.raises(ValueError):
        make_grid(1, 12, 1.0)


def test_multi_index_order_and_count():
    assert multi_indices(2, 2) == [(2, 0), (1, 1), (0, 2)]
    for n in (1, 2, 3):
        for m in range(4):
            assert len(multi_indices(n, m)) == count_multi_indices(n, m) == math.comb(n + m - 1, m)


def test_spectral_derivative_of_trig_is_exact(grid1):
    k = 2 * math.pi * 3 / grid1.box_length
    f = field_from_function(grid1, lambda x: np.sin(k * x))
    d2 = derivative(f, (2,))
    np.testing.assert_allclose(d2.values[0].real, -k ** 2 * np.sin(k * grid1.axis()), atol=1e-10)


def test_finite_difference_scheme_converges():
    errs = []
    for P in (64, 128):
        g = make_grid(1, P, 2 * math.pi)
        f = field_from_function(g, np.sin)
        d = derivative(f, (1,), scheme="fd2")
        errs.append(np.abs(d.values[0].real - np.cos(g.axis())).max())
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_grad_m_values_stacks_alpha_major(grid2):
    f = field_from_function(grid2, lambda x, y: np.sin(2 * math.pi * x / 8), components=2)
    G = grad_m_values(f.values, grid2, 1)
    assert G.shape == (4,) + grid2.shape
    np.testing.assert_allclose(G[2:], 0, atol=1e-12)  # d/dy of both components


def test_field_rejects_nonfinite(grid1):
    v = np.zeros(grid1.shape)
    v[3] = np.nan
    with pytest.raises(FloatingPointError):
        Field(grid1, v)


def test_spacetime_field_from_fields(grid1):
    fs = [Field(grid1, np.full(grid1.shape, k)) for k in range(3)]
    u = SpaceTimeField.from_fields([0.0, 0.1, 0.2], fs)
    assert len(u) == 3
    assert u.slice(2).values[0, 0] == 2
    with pytest.raises(ValueError):
        SpaceTimeField(grid1, [0.0, 0.0], u.values[:2])


def test_lp_norm_of_constant(grid1):
    f = Field(grid1, np.full(grid1.shape, 2.0))
    assert lp_norm(f, 2) == pytest.approx(2 * math.sqrt(16.0))
    assert lp_norm(f, math.inf) == 2.0
    assert lp_norm(f, 1, window=4.0) == pytest.approx(2 * 8.0 + 2 * grid1.spacing)


def test_ball_average_matches_direct_count(grid2, rng):
    data = rng.random(grid2.shape)
    r = 0.8
    avg = ball_average(data, grid2, r)
    for idx in [(0, 0), (5, 17), (31, 31), (16, 16)]:
        c = [grid2.axis()[i] for i in idx]
        ball = make_ball(grid2, c, r)
        assert avg[idx] == pytest.approx(data[ball.mask()].mean(), rel=1e-12)


def test_ball_mean_sq_rejects_subcell_ball(grid1):
    f = Field(grid1, np.ones(grid1.shape))
    with pytest.raises(ValueError):
        ball_mean_sq(f, make_ball(grid1, [0.0], grid1.spacing / 2))
    assert ball_mean_sq(f, make_ball(grid1, [0.0], 1.0)) == pytest.approx(1.0)


def test_poincare_polynomial_is_zero_and_bump_is_bounded():
    g = make_grid(1, 256, 16.0)
    lin = field_from_function(g, lambda x: 3 * x + 1)
    ball = make_ball(g, [0.0], 2.0)
    rep = poincare_check(lin, 2, ball, scheme="fd2")
    assert rep.ratio == 0.0 and not rep.flagged
    bump = field_from_function(g, lambda x: np.exp(-x ** 2))
    rep = poincare_check(bump, 1, ball)
    assert 0 < rep.ratio < 10


def test_gn_check_endpoints():
    g = make_grid(1, 256, 32.0)
    f = field_from_function(g, lambda x: np.exp(-x ** 2))
    rep = gn_check(f, 2, 0, 2.0, 2.0)
    assert rep.ratio == pytest.approx(1.0)
    rep = gn_check(f, 2, 1, 2.0, 2.0)
    assert 0 < rep.ratio <= 1.0 + 1e-12  # interpolation with constant 1 in L2 by Cauchy-Schwarz


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-50, 50).filter(lambda v: abs(v) > 1e-3), p=st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_lp_norm_homogeneous(c, p):
    g = make_grid(1, 64, 8.0)
    f = field_from_function(g, lambda x: np.exp(-x ** 2) * (1 + 0.5j * x))
    assert lp_norm(f * c, p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-12)
