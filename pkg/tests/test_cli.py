import json

import numpy as np
import pytest

from tentlab.cli import main
from tentlab.grid import make_grid
from tentlab.io import read_ptsf


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def heat_cfg(tmp_path):
    p = tmp_path / "heat.json"
    p.write_text(json.dumps({"name": "run_energy_identity", "grid": {"P": 64, "L": 16.0},
                             "T": 0.1, "solver": {"dt": 0.01}}))
    return p


def test_solve_info_norm_project(tmp_path, capsys, heat_cfg):
    traj = tmp_path / "traj.ptsf"
    code, out, _ = run(capsys, "solve", "--config", str(heat_cfg), "--out", str(traj))
    assert code == 0 and json.loads(out)["steps"] == 10
    assert (tmp_path / "traj.manifest.json").exists()
    code, out, _ = run(capsys, "info", "--in", str(traj))
    h = json.loads(out)
    assert code == 0 and (h["n"], h["P"], h["K"]) == (1, 64, 11)
    js = tmp_path / "norm.json"
    code, out, _ = run(capsys, "norm", "--kind", "tent", "--p", "2", "--m", "1", "--in", str(traj),
                       "--json", str(js))
    rep = json.loads(js.read_text())
    assert code == 0 and rep["name"] == "tent" and rep["grid"] == {"n": 1, "P": 64, "L": 16.0}
    assert set(rep["truncation"]) >= {"rmin", "rmax", "window"}
    for kind in ("nontan", "carleson", "bmo", "bmom", "lpm"):
        code, out, err = run(capsys, "norm", "--kind", kind, "--p", "inf" if kind == "carleson" else "2",
                             "--m", "2", "--in", str(traj))
        assert code == 0, err
    code, out, _ = run(capsys, "project", "--in", str(traj), "--radius", "2", "--m", "2",
                       "--out", str(tmp_path / "resid.ptsf"))
    assert code == 0 and len(json.loads(out)["coefficients"][0]) == 2
    assert read_ptsf(tmp_path / "resid.ptsf").values.shape == (1, 1, 64)


def test_semigroup_command(tmp_path, capsys, heat_cfg):
    out_path = tmp_path / "s.ptsf"
    code, _, _ = run(capsys, "semigroup", "--config", str(heat_cfg), "--t", "0.5", "--frames", "4",
                     "--out", str(out_path))
    assert code == 0
    u = read_ptsf(out_path)
    np.testing.assert_allclose(u.times, [0, 0.125, 0.25, 0.375, 0.5])


def test_verify_writes_artifacts(tmp_path, capsys):
    cfg = tmp_path / "fine.json"
    cfg.write_text(json.dumps({"name": "run_energy_identity", "grid": {"P": 64, "L": 16.0},
                               "T": 0.1, "solver": {"dt": 0.001}}))
    out = tmp_path / "res"
    code, stdout, _ = run(capsys, "verify", "run_energy_identity", "--config", str(cfg),
                          "--out", str(out))
    assert code == 0 and json.loads(stdout) == {"run_energy_identity": "pass"}
    result = json.loads((out / "result.json").read_text())
    assert result["passed"] and result["provenance"]["config_hash"]
    assert (out / "curves.csv").read_text().startswith("sweep_var,metric,value\n")
    manifest = json.loads((out / "manifest.json").read_text())
    assert {"command", "config_hash", "seeds", "specs", "version", "wall_clock"} <= set(manifest)
    # the experiment name may also come from the config file alone
    code, stdout, _ = run(capsys, "verify", "--config", str(cfg), "--out", str(tmp_path / "r2"))
    assert code == 0 and json.loads(stdout) == {"run_energy_identity": "pass"}


def test_error_exit_codes(tmp_path, capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 2 and json.loads(err)["error"] == "usage"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "run_energy_identity", "coeffs": "rough(0.5,1)"}))
    code, _, err = run(capsys, "verify", "run_energy_identity", "--config", str(bad))
    e = json.loads(err)
    assert code == 2 and e["error"] == "config" and "contrast" in e["message"]
    code, _, err = run(capsys, "info", "--in", str(tmp_path / "none.ptsf"))
    assert code == 2
    stiff = tmp_path / "stiff.json"
    stiff.write_text(json.dumps({"name": "run_energy_identity", "coeffs": "rough(100,3)", "m": 2,
                                 "grid": {"P": 128, "L": 16.0}, "T": 0.1,
                                 "solver": {"dt": 0.1, "max_lin_iters": 1, "tol_lin": 1e-12}}))
    code, _, err = run(capsys, "solve", "--config", str(stiff), "--out", str(tmp_path / "x.ptsf"))
    assert code == 3 and json.loads(err)["error"] == "numerical"


def test_semigroup_rejects_rough(tmp_path, capsys):
    cfg = tmp_path / "r.json"
    cfg.write_text(json.dumps({"name": "run_energy_identity", "coeffs": "rough(4,1)"}))
    code, _, err = run(capsys, "semigroup", "--config", str(cfg))
    assert code == 2


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("TENTLAB_THREADS", "abc")
    code, _, err = run(capsys, "verify", "--all")
    assert code == 2 and "TENTLAB_THREADS" in json.loads(err)["message"]


def test_config_command_roundtrip(tmp_path, capsys):
    path = tmp_path / "d.json"
    code, out, _ = run(capsys, "config", "run_offdiag_fit", "--out", str(path))
    assert code == 0
    code2, out2, _ = run(capsys, "config", "run_offdiag_fit", "--config", str(path))
    assert out == out2
