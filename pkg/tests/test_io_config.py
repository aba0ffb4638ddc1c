import json

import numpy as np
import pytest

from tentlab.config import (EXPERIMENTS, ConfigError, canonical_json, default_config, parse_config,
                            validate)
from tentlab.grid import Field, SpaceTimeField, make_grid
from tentlab.io import MAGIC, read_field, read_header, read_ptsf, write_ptsf


def test_ptsf_roundtrip(tmp_path):
    g = make_grid(2, 8, 3.0)
    rng = np.random.default_rng(0)
    u = SpaceTimeField(g, [0.0, 0.5, 1.5], rng.standard_normal((3, 2, 8, 8)) + 1j)
    path = tmp_path / "u.ptsf"
    write_ptsf(path, u)
    back = read_ptsf(path)
    np.testing.assert_array_equal(back.values, u.values)
    np.testing.assert_array_equal(back.times, u.times)
    h = read_header(path)
    assert (h["n"], h["P"], h["N"], h["K"], h["box_length"]) == (2, 8, 2, 3, 3.0)
    assert path.read_bytes()[:6] == MAGIC
    assert path.stat().st_size == 6 + 24 + 3 * 8 + 3 * 2 * 64 * 16


def test_ptsf_field_and_errors(tmp_path):
    g = make_grid(1, 16, 1.0)
    f = Field(g, np.arange(16.0))
    write_ptsf(tmp_path / "f.ptsf", f)
    np.testing.assert_array_equal(read_field(tmp_path / "f.ptsf").values, f.values)
    bad = tmp_path / "bad.ptsf"
    bad.write_bytes(b"NOTPTSF" + bytes(40))
    with pytest.raises(ValueError):
        read_header(bad)
    short = tmp_path / "short.ptsf"
    short.write_bytes((tmp_path / "f.ptsf").read_bytes()[:-16])
    with pytest.raises(ValueError, match="truncated"):
        read_ptsf(short)


def test_defaults_valid_and_roundtrip(tmp_path):
    for name in EXPERIMENTS:
        cfg = default_config(name)
        path = tmp_path / f"{name}.json"
        path.write_text(canonical_json(cfg.to_dict()))
        assert parse_config(path).hash == cfg.hash


def test_minimal_config_fills_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"name": "run_energy_identity", "grid": {"P": 128}}))
    cfg = parse_config(path)
    assert cfg["grid"] == {"n": 1, "P": 128, "L": 32.0}
    assert cfg["solver"]["theta"] == 1.0


def test_validation_lists_every_error():
    with pytest.raises(ConfigError) as exc:
        validate({"name": "run_energy_identity", "coeffs": "rough(0.5,1)", "bogus": 1,
                  "grid": {"P": 100, "Q": 2}, "solver": {"dt": -1}})
    errs = exc.value.errors
    assert any("contrast" in e for e in errs)
    assert any("bogus" in e for e in errs)
    assert any("grid.Q" in e for e in errs)
    assert any("grid.P" in e for e in errs)
    assert any("solver.dt" in e for e in errs)


def test_config_errors_for_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "missing.json")
    p = tmp_path / "x.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config(p)
    with pytest.raises(ConfigError, match="unknown experiment"):
        validate({"name": "run_everything"})


def test_hash_changes_with_content():
    a = default_config("run_energy_identity")
    b = default_config("run_energy_identity", seed=1)
    assert a.hash != b.hash and len(a.hash) == 16
