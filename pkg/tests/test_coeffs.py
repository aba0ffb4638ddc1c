import numpy as np
import pytest

from tentlab.coeffs import (ellipticity_report, from_preset, make_constant, make_perturbation,
                            make_rough, parse_preset, polyharmonic, polyharmonic_matrix, symbol,
                            total_variation)
from tentlab.grid import make_grid


def test_polyharmonic_symbol_is_xi_to_the_2m():
    g = make_grid(2, 16, 2 * np.pi)
    for m in (1, 2, 3):
        A = polyharmonic(g, m)
        s = symbol(A)[..., 0, 0]
        np.testing.assert_allclose(s, g.freq_norm2() ** m, rtol=1e-12, atol=1e-9)
        rep = ellipticity_report(A)
        assert rep.lambda_est == pytest.approx(1.0)


def test_polyharmonic_matrix_multinomial_weights():
    a = polyharmonic_matrix(2, 2)
    np.testing.assert_array_equal(np.diag(a).real, [1.0, 2.0, 1.0])


def test_rough_contrast_one_is_identity(grid1):
    A = make_rough(3, 1.0, grid1, 2)
    np.testing.assert_array_equal(A.entries, np.ones_like(A.entries))


def test_rough_ellipticity_bounds(grid1):
    for kappa in (2.0, 10.0):
        A = make_rough(42, kappa, grid1, 1)
        rep = ellipticity_report(A)
        assert rep.lambda_est >= 1.0 - 1e-12
        assert rep.Lambda_est <= kappa + 1e-12
        assert A.pointwise_elliptic


def test_rough_is_resolution_and_box_independent():
    a = make_rough(7, 10.0, make_grid(1, 64, 8.0), 1).entries[0, 0, 0]
    b = make_rough(7, 10.0, make_grid(1, 128, 8.0), 1).entries[0, 0, 0]
    c = make_rough(7, 10.0, make_grid(1, 128, 16.0), 1).entries[0, 0, 0]
    np.testing.assert_array_equal(a, b[::2])
    np.testing.assert_array_equal(a, c[32:96])


def test_rough_seeds_differ(grid1):
    a = make_rough(1, 10.0, grid1, 1).entries
    b = make_rough(2, 10.0, grid1, 1).entries
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, make_rough(1, 10.0, grid1, 1).entries)


def test_rough_rejects_contrast_below_one(grid1):
    with pytest.raises(ValueError):
        make_rough(0, 0.5, grid1, 1)


def test_bv_total_variation_budget(grid1):
    A = make_rough(5, 4.0, grid1, 1, 1, "bv", pieces=6, variation=2.0)
    assert total_variation(A) <= 2.0 + 1e-9
    assert total_variation(A) > 1.0
    A0 = make_rough(5, 4.0, grid1, 1, 1, "bv", pieces=6, variation=0.0)
    assert A0.autonomous


def test_piecewise_constant_pieces(grid1):
    A = make_rough(5, 4.0, grid1, 1, 1, "piecewise_constant", pieces=4, horizon=2.0)
    assert A.times == (0.0, 0.5, 1.0, 1.5)
    assert A.piece_index(0.49) == 0 and A.piece_index(0.5) == 1 and A.piece_index(9.0) == 3


def test_time_reversed_adjoint(grid1):
    A = make_rough(5, 4.0, grid1, 1, 1, "piecewise_constant", pieces=4, horizon=1.0)
    B = A.time_reversed_adjoint(1.0)
    for s in (0.1, 0.3, 0.6, 0.9):
        np.testing.assert_array_equal(B.at(s), np.conj(np.swapaxes(A.at(1.0 - s), 0, 1)))


def test_perturbation_norm_and_ellipticity(grid1):
    base = polyharmonic(grid1, 1)
    A = make_perturbation(base, 0.1, 3)
    rep = ellipticity_report(A)
    assert rep.lambda_est >= 0.9 - 1e-12
    assert np.abs(A.entries - base.entries).max() <= 0.1 + 1e-12
    assert make_perturbation(base, 0.0, 3) is base
    with pytest.raises(ValueError):
        make_perturbation(base, 1.0, 3)


def test_constant_matrix_symbol_ellipticity():
    g = make_grid(1, 32, 2 * np.pi)
    A = make_constant([[2.0 + 1j]], g, 1)
    assert ellipticity_report(A).lambda_est == pytest.approx(2.0)


def test_preset_parsing(grid1):
    assert parse_preset("rough(10,42)") == ("rough", [10.0, 42.0])
    assert parse_preset("rough:10:42") == ("rough", [10.0, 42.0])
    assert parse_preset("heat") == ("heat", [])
    assert from_preset("bv(4,1,4,3)", grid1, 1).name == "bv"
    assert from_preset("pwc(4,3,1)", grid1, 1).entries.shape[0] == 3
    with pytest.raises(ValueError):
        from_preset("heat", grid1, 2)
    with pytest.raises(ValueError):
        from_preset("granite", grid1, 1)
