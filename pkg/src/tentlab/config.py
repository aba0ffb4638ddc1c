"""Experiment configurations: defaults, strict validation and content hashes."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

from .coeffs import parse_preset


class ConfigError(ValueError):
    """Raised with the complete list of validation problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_SOLVER = {"dt": 1e-3, "theta": 1.0, "tol_lin": 1e-10, "max_lin_iters": 500}


def _base(name, n=1, P=256, L=32.0, coeffs="heat", m=1, T=1.0, dt=1e-3, theta=1.0,
          p_list=(2.0,), seed=0, tolerances=None, params=None):
    return {
        "name": name,
        "grid": {"n": n, "P": P, "L": L},
        "coeffs": coeffs,
        "m": m,
        "N": 1,
        "p_list": list(p_list),
        "solver": dict(_SOLVER, dt=dt, theta=theta),
        "T": T,
        "seed": seed,
        "tolerances": dict(tolerances or {}),
        "params": dict(params or {}),
    }


DEFAULTS = {
    "run_energy_identity": _base(
        "run_energy_identity", tolerances={"identity_rel": 0.02, "chain_slack": 10.0},
        params={"data": "gaussian", "scale": 1.0}),
    "run_offdiag_fit": _base(
        "run_offdiag_fit", P=2048, L=256.0, tolerances={"exponent_rel": 0.15, "slope_rel": 0.15},
        params={"t": 1.0, "half_width": 4.0, "rho_min": 2.0, "rho_max": 6.0, "samples": 17,
                "rho_max_higher": 20.0, "samples_higher": 73, "probes": 2}),
    "run_conservation": _base(
        "run_conservation", P=64, L=8.0, coeffs="rough(10,42)", m=2, T=0.02,
        tolerances={"final_err": 1e-3, "halving": 2.0},
        params={"doublings": 3, "contrast_m1": True}),
    "run_equivalence_sweep": _base(
        "run_equivalence_sweep", P=512, L=64.0, T=64.0, dt=2e-3, p_list=(2.0, 4.0),
        tolerances={"dilation_rel": 0.25, "energy_rel": 0.05},
        params={"families": ["gaussian", "step", "bandlimited"], "scale": 0.5, "dilation": 2.0,
                "bmo": True}),
    "run_carleson_bmo": _base(
        "run_carleson_bmo", P=512, L=64.0, T=64.0, dt=2e-3, tolerances={"dilation_rel": 0.25},
        params={"scales": [1.0, 2.0], "shift": 0.0, "quotient_demo": True}),
    "run_reversed_holder": _base(
        "run_reversed_holder", P=128, L=8.0, coeffs="rough(10,7)", T=2.5, dt=2.5e-3,
        tolerances={"refine_rel": 0.20},
        params={"cylinders": 100, "r_min": 0.125, "r_max": 0.25, "refine": True,
                "data_modes": 12}),
    "run_trace_convergence": _base(
        "run_trace_convergence", T=0.5, p_list=(1.5, 2.0), tolerances={"monotone_slack": 1e-12},
        params={"data": "gaussian", "scale": 1.0}),
    "run_local_lp_bound": _base(
        "run_local_lp_bound", P=128, L=8.0, coeffs="rough(10,11)", T=2.5, dt=2.5e-3,
        p_list=(2.1, 2.2), tolerances={"refine_rel": 0.25},
        params={"cylinders": 50, "t_min": 0.05, "t_max": 0.6, "refine": True, "data_modes": 6}),
    "run_ubc_probe": _base(
        "run_ubc_probe", P=128, L=16.0, coeffs="rough(10,3)", T=0.2, dt=1e-2,
        p_list=(1.8, 2.0, 2.2), tolerances={"contraction": 1e-8, "heat_lp": 1e-6},
        params={"pairs": [[0.0, 0.05], [0.05, 0.2]], "probes": 2, "boyd_iters": 4}),
    "run_duhamel_crosscheck": _base(
        "run_duhamel_crosscheck", coeffs="polyharmonic", m=2, T=0.5, theta=0.5,
        tolerances={"rel_diff": 1e-3},
        params={"eps_list": [0.0, 0.1, 0.5], "J": 8, "quadrature": "midpoint", "pieces": 4,
                "perturb_seed": 7}),
}

EXPERIMENTS = tuple(DEFAULTS)

_TOP = set(next(iter(DEFAULTS.values())))
_GRID = {"n", "P", "L"}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    data: dict = field(repr=False)
    output: str | None = None

    def __getitem__(self, key):
        return self.data[key]

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def canonical_json(d) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(d: dict) -> str:
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()[:16]


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _validate_preset(spec, errors):
    try:
        name, args = parse_preset(spec)
    except (ValueError, TypeError):
        errors.append(f"coeffs: cannot parse preset {spec!r}")
        return
    nargs = {"polyharmonic": 0, "heat": 0, "rough": 1, "pwc": 3, "bv": 4, "perturb": 1}
    if name not in nargs:
        errors.append(f"coeffs: unknown preset {name!r}")
        return
    if len(args) < nargs[name]:
        errors.append(f"coeffs: preset {name!r} needs {nargs[name]} arguments")
        return
    if name in ("rough", "pwc", "bv") and args[0] < 1:
        errors.append(f"coeffs: contrast kappa must be >= 1, got {args[0]:g}")
    if name == "perturb" and not 0 <= args[0] < 1:
        errors.append("coeffs: perturbation size must lie in [0, 1)")


def validate(raw: dict, output: str | None = None) -> ExperimentConfig:
    """Merge `raw` over the defaults of its experiment and check every field."""
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    name = raw.get("name")
    if name is None:
        raise ConfigError(["missing required key 'name'"])
    if name not in DEFAULTS:
        raise ConfigError([f"name: unknown experiment {name!r}"])
    cfg = copy.deepcopy(DEFAULTS[name])
    for k, v in raw.items():
        if k == "output":
            continue
        if k not in _TOP:
            errors.append(f"unknown key {k!r}")
            continue
        if isinstance(cfg[k], dict):
            if not isinstance(v, dict):
                errors.append(f"{k}: expected an object")
                continue
            allowed = _GRID if k == "grid" else set(cfg[k])
            for kk, vv in v.items():
                if kk not in allowed:
                    errors.append(f"unknown key '{k}.{kk}'")
                else:
                    cfg[k][kk] = vv
        else:
            cfg[k] = v
    g = cfg["grid"]
    if g.get("n") not in (1, 2):
        errors.append("grid.n must be 1 or 2")
    P = g.get("P")
    if not (isinstance(P, int) and not isinstance(P, bool) and P >= 8 and P & (P - 1) == 0):
        errors.append("grid.P must be a power of two >= 8")
    if not (_is_num(g.get("L")) and g["L"] > 0):
        errors.append("grid.L must be positive")
    if not isinstance(cfg["coeffs"], str):
        errors.append("coeffs must be a preset string")
    else:
        _validate_preset(cfg["coeffs"], errors)
    if not (isinstance(cfg["m"], int) and cfg["m"] >= 1):
        errors.append("m must be a positive integer")
    if not (isinstance(cfg["N"], int) and cfg["N"] >= 1):
        errors.append("N must be a positive integer")
    if not (isinstance(cfg["seed"], int) and cfg["seed"] >= 0):
        errors.append("seed must be a non-negative integer")
    if not (_is_num(cfg["T"]) and cfg["T"] > 0):
        errors.append("T must be positive")
    pl = cfg["p_list"]
    if not (isinstance(pl, list) and pl and all(_is_num(p) and p >= 1 for p in pl)):
        errors.append("p_list must be a non-empty list of exponents >= 1")
    s = cfg["solver"]
    if not (_is_num(s["dt"]) and s["dt"] > 0):
        errors.append("solver.dt must be positive")
    if s["theta"] not in (0.5, 1, 1.0):
        errors.append("solver.theta must be 1 or 0.5")
    if not (_is_num(s["tol_lin"]) and 0 < s["tol_lin"] <= 1e-6):
        errors.append("solver.tol_lin must lie in (0, 1e-6]")
    if not (isinstance(s["max_lin_iters"], int) and s["max_lin_iters"] > 0):
        errors.append("solver.max_lin_iters must be a positive integer")
    for k, v in cfg["tolerances"].items():
        if not (_is_num(v) and v > 0):
            errors.append(f"tolerances.{k} must be positive")
    if errors:
        raise ConfigError(errors)
    cfg["solver"]["theta"] = float(cfg["solver"]["theta"])
    return ExperimentConfig(name, cfg, output or raw.get("output"))


def default_config(name: str, **overrides) -> ExperimentConfig:
    raw = {"name": name}
    raw.update(overrides)
    return validate(raw)


def parse_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file (strict: unknown keys are errors)."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"])
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"])
    return validate(raw)
