import json

import numpy as np
import pytest

from tentlab import experiments as ex
from tentlab.grid import make_grid


def test_upper_hull_is_concave_envelope():
    x = np.arange(6.0)
    y = np.array([0.0, -3.0, -1.0, -4.0, -2.5, -6.0])
    H = ex.upper_hull(x, y)
    np.testing.assert_array_equal(H[:, 0], [0, 2, 4, 5])
    slopes = np.diff(H[:, 1]) / np.diff(H[:, 0])
    assert np.all(np.diff(slopes) < 0)


def test_graded_times():
    t = ex.graded_times(10.0, 0.01, ratio=1.05)
    assert t[0] == 0 and t[-1] == 10.0
    assert np.all(np.diff(t) >= 0.01 - 1e-15)
    assert np.diff(t)[-2] / np.diff(t)[-3] == pytest.approx(1.05)


def test_random_periodic_is_resolution_independent():
    a = ex.random_periodic(make_grid(1, 64, 8.0), 6, 3).values[0]
    b = ex.random_periodic(make_grid(1, 128, 8.0), 6, 3).values[0]
    np.testing.assert_allclose(a, b[::2], atol=1e-12)
    with pytest.raises(ValueError):
        ex.random_periodic(make_grid(1, 8, 8.0), 6, 3)


def test_smooth_window():
    w = ex.smooth_window(np.array([0.0, 1.0, 1.5, 2.0, 3.0]), 1.0, 2.0)
    np.testing.assert_allclose(w[[0, 1, 3, 4]], [1, 1, 0, 0])
    assert w[2] == pytest.approx(0.5)


@pytest.mark.parametrize("kind", ["zero", "gaussian", "step", "bandlimited", "log", "log_plus_x",
                                  "linear", "constant"])
def test_make_data_kinds(kind):
    f = ex.make_data(kind, make_grid(1, 128, 32.0), seed=1, scale=2.0)
    assert np.all(np.isfinite(f.values))
    with pytest.raises(ValueError):
        ex.make_data("spiral", make_grid(1, 16, 1.0))


def test_energy_zero_data():
    r = ex.run("run_energy_identity", params={"data": "zero"}, T=0.01)
    assert r.passed and r.metrics["u0_norm"] == 0


def test_energy_rough_small():
    r = ex.run("run_energy_identity", coeffs="rough(10,5)", m=2, T=0.02, grid={"P": 128})
    assert r.passed
    assert r.metrics["max_step_excess_lower"] <= 0 and r.metrics["max_step_excess_upper"] <= 0


def test_result_json_is_serializable():
    r = ex.run("run_trace_convergence", T=0.05)
    js = r.to_json()
    json.dumps(js, allow_nan=False)
    assert js["provenance"]["seed"] == 0 and set(js["provenance"]["versions"]) == {
        "tentlab", "numpy", "scipy"}
    assert r.passed


def test_trace_zero_data():
    r = ex.run("run_trace_convergence", T=0.05, params={"data": "zero"})
    assert r.metrics["trace_error_first_step"] == 0.0


def test_ubc_heat_contracts():
    r = ex.run("run_ubc_probe", coeffs="heat", params={"pairs": [[0.0, 0.1]], "probes": 2})
    assert r.passed
    for p in (1.8, 2.0, 2.2):
        assert r.metrics[f"p{p:g}.norm_estimate"] <= 1 + 1e-6


def test_conservation_small_m1_constants():
    r = ex.run("run_conservation", m=1, params={"doublings": 1, "contrast_m1": False})
    assert r.verdicts == {"constants": True}
