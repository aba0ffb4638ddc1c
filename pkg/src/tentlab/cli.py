"""Command-line front end: ``tentlab solve|semigroup|norm|project|verify|info``.

Exit codes: 0 on success, 2 on invalid input (configuration, arguments, files), 3 on numerical
failure (solver divergence, unresolved grids, ill-conditioned projections). Errors are written
to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from . import experiments as ex
from . import functionals as fn
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, canonical_json, default_config, parse_config
from .grid import Field, make_ball
from .io import read_field, read_header, read_ptsf, write_ptsf
from .propagator import LinearSolveError, PicardDivergence, Propagator
from .semigroup import Semigroup

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: list
    config_hash: str | None
    seeds: list
    specs: dict
    version: str = __version__
    started: float = field(default_factory=time.time)
    wall_clock: float = 0.0

    def to_json(self) -> dict:
        return {"command": self.command, "config_hash": self.config_hash, "seeds": self.seeds,
                "specs": self.specs, "version": self.version,
                "versions": {"numpy": np.__version__, "scipy": scipy.__version__,
                             "python": platform.python_version()},
                "started": self.started, "wall_clock": self.wall_clock}


def _atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_manifest(path: str, manifest: RunManifest) -> None:
    manifest.wall_clock = time.time() - manifest.started
    _write_json(path, manifest.to_json())


def _manifest_path(out: str) -> str:
    if os.path.isdir(out):
        return os.path.join(out, "manifest.json")
    return os.path.splitext(out)[0] + ".manifest.json"


def _specs(cfg: ExperimentConfig) -> dict:
    return {"grid": cfg["grid"], "coeffs": cfg["coeffs"], "m": cfg["m"], "N": cfg["N"],
            "solver": cfg["solver"], "T": cfg["T"]}


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("TENTLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"TENTLAB_THREADS must be an integer, got {env!r}")
    return 1


def _load_config(args, name: str) -> ExperimentConfig:
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = default_config(name)
    if args.seed is not None:
        data = cfg.to_dict()
        data["seed"] = args.seed
        cfg = default_config(data.pop("name"), **data)
    return cfg


def _initial_data(args, cfg, grid):
    if args.input:
        f = read_field(args.input, 0)
        if (f.grid.n, f.grid.points, f.grid.box_length) != (grid.n, grid.points, grid.box_length):
            raise UsageError("input grid does not match the configured grid")
        return f
    return ex.make_data("gaussian", grid, cfg["seed"], 1.0, cfg["N"])


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(args) -> int:
    cfg = _load_config(args, "run_energy_identity")
    g = ex.grid_of(cfg)
    A = ex.coeffs_of(cfg, g)
    f = _initial_data(args, cfg, g)
    T = args.t if args.t is not None else cfg["T"]
    manifest = RunManifest(sys.argv, cfg.hash, [cfg["seed"]], _specs(cfg))
    traj = Propagator(A, ex.solver_of(cfg)).propagate(0.0, T, f)
    out = args.out or "trajectory.ptsf"
    write_ptsf(out, traj)
    _write_manifest(_manifest_path(out), manifest)
    print(json.dumps({"out": out, "steps": len(traj) - 1, "T": T}))
    return EXIT_OK


def cmd_semigroup(args) -> int:
    cfg = _load_config(args, "run_energy_identity")
    g = ex.grid_of(cfg)
    A = ex.coeffs_of(cfg, g)
    try:
        S = Semigroup(A)
    except ValueError as exc:
        raise UsageError(str(exc))
    f = _initial_data(args, cfg, g)
    T = args.t if args.t is not None else cfg["T"]
    times = np.linspace(0.0, T, args.frames + 1) if args.frames else [T]
    traj = ex.trajectory(S, f, times) if args.frames else S.apply(T, f)
    out = args.out or "semigroup.ptsf"
    manifest = RunManifest(sys.argv, cfg.hash, [cfg["seed"]], _specs(cfg))
    write_ptsf(out, traj)
    _write_manifest(_manifest_path(out), manifest)
    print(json.dumps({"out": out, "T": T}))
    return EXIT_OK


def cmd_norm(args) -> int:
    if not args.input:
        raise UsageError("norm needs --in")
    p = math.inf if str(args.p).lower() in ("inf", "infinity") else float(args.p)
    kind, m, w = args.kind, args.m, args.window
    if kind in ("tent", "nontan", "carleson"):
        u = read_ptsf(args.input)
        if kind == "tent":
            rep = fn.tent_norm(fn.gradient_trajectory(u, m), p, m, w)
        elif kind == "nontan":
            rep = fn.nontangential_norm(u, p, m, w)
        else:
            rep = fn.carleson_norm(u, m, w)
    else:
        f = read_field(args.input, args.frame)
        if kind == "bmo":
            rep = fn.bmo_norm(f, w)
        elif kind == "bmom":
            rep = fn.bmo_m_norm(f, m, w)
        else:
            rep = fn.lp_m_norm(f, m, p, w)
    obj = rep.to_json()
    text = json.dumps(obj, indent=2, sort_keys=True)
    if args.json:
        _write_json(args.json, obj)
    print(text)
    return EXIT_OK


def cmd_project(args) -> int:
    if not args.input:
        raise UsageError("project needs --in")
    f = read_field(args.input, args.frame)
    center = [float(c) for c in args.center.split(",")] if args.center else [0.0] * f.grid.n
    if len(center) != f.grid.n:
        raise UsageError(f"--center needs {f.grid.n} coordinates")
    ball = make_ball(f.grid, center, args.radius)
    proj = fn.poly_project(f, ball, args.m, args.weight)
    obj = {"center": center, "radius": args.radius, "m": args.m, "weight": args.weight,
           "exponents": [list(e) for e in proj.exps],
           "coefficients": [[[c.real, c.imag] for c in row] for row in np.atleast_2d(proj.coeffs)]}
    if args.out:
        resid = Field(f.grid, f.values - proj.evaluate())
        write_ptsf(args.out, resid)
    if args.json:
        _write_json(args.json, obj)
    print(json.dumps(obj))
    return EXIT_OK


def _curves_csv(result) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sweep_var", "metric", "value"])
    for row in result.curves:
        w.writerow([row[0], row[1], repr(float(row[2]))])
    return buf.getvalue()


def _verify_one(name, args, outdir):
    cfg = _load_config(args, name) if not args.config or not args.all else default_config(name)
    if args.config and not args.all and cfg.name != name:
        raise UsageError(f"config is for {cfg.name!r}, not {name!r}")
    manifest = RunManifest(sys.argv, cfg.hash, [cfg["seed"]], _specs(cfg))
    result = ex.run(cfg)
    os.makedirs(outdir, exist_ok=True)
    _write_json(os.path.join(outdir, "result.json"), result.to_json())
    _atomic_write_text(os.path.join(outdir, "curves.csv"), _curves_csv(result))
    _write_json(os.path.join(outdir, "config.json"), cfg.to_dict())
    _write_manifest(os.path.join(outdir, "manifest.json"), manifest)
    return name, result.passed


def cmd_verify(args) -> int:
    out = args.out or "results"
    if args.all:
        names = list(EXPERIMENTS)
    elif args.experiment:
        if args.experiment not in EXPERIMENTS:
            raise UsageError(f"unknown experiment {args.experiment!r}")
        names = [args.experiment]
    elif args.config:
        names = [parse_config(args.config).name]
    else:
        raise UsageError("verify needs an experiment name, --config or --all")
    dirs = {n: (os.path.join(out, n) if args.all else out) for n in names}
    workers = _threads(args)
    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(lambda n: _verify_one(n, args, dirs[n]), names))
    else:
        outcomes = [_verify_one(n, args, dirs[n]) for n in names]
    summary = {n: ("pass" if ok else "fail") for n, ok in outcomes}
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_info(args) -> int:
    if not args.input:
        raise UsageError("info needs --in")
    print(json.dumps(read_header(args.input), indent=2))
    return EXIT_OK


def cmd_config(args) -> int:
    cfg = _load_config(args, args.experiment)
    text = canonical_json(cfg.to_dict())
    if args.out:
        _atomic_write_text(args.out, text + "\n")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment configuration (JSON)")
    common.add_argument("--in", dest="input", help="input PTSF file")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--json-errors", action="store_true",
                        help="errors are always JSON on stderr; accepted for scripts")

    p = _Parser(prog="tentlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tentlab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", parents=[common], help="time-step a configured problem")
    s.add_argument("--t", type=float, help="final time (default: config T)")

    s = sub.add_parser("semigroup", parents=[common], help="exact semigroup for constant presets")
    s.add_argument("--t", type=float)
    s.add_argument("--frames", type=int, default=0, help="uniform frames in [0, t]")

    s = sub.add_parser("norm", parents=[common], help="evaluate a functional")
    s.add_argument("--kind", required=True,
                   choices=["tent", "nontan", "carleson", "bmo", "bmom", "lpm"])
    s.add_argument("--p", default="2")
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--window", type=float)
    s.add_argument("--frame", type=int, default=-1)
    s.add_argument("--json")

    s = sub.add_parser("project", parents=[common], help="least-squares polynomial on a ball")
    s.add_argument("--m", type=int, default=2)
    s.add_argument("--center")
    s.add_argument("--radius", type=float, required=True)
    s.add_argument("--weight", choices=["flat", "smooth"], default="flat")
    s.add_argument("--frame", type=int, default=-1)
    s.add_argument("--json")

    s = sub.add_parser("verify", parents=[common], help="run experiments")
    s.add_argument("experiment", nargs="?")
    s.add_argument("--all", action="store_true")

    sub.add_parser("info", parents=[common], help="print a PTSF header")

    s = sub.add_parser("config", parents=[common], help="print the resolved configuration")
    s.add_argument("experiment", choices=EXPERIMENTS)
    return p


_COMMANDS = {"solve": cmd_solve, "semigroup": cmd_semigroup, "norm": cmd_norm,
             "project": cmd_project, "verify": cmd_verify, "info": cmd_info, "config": cmd_config}


def _fail(code: int, kind: str, message: str, details=None) -> int:
    err = {"error": kind, "message": message, "exit_code": code}
    if details:
        err["details"] = details
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        return _fail(EXIT_INVALID, "usage", str(exc))
    except ConfigError as exc:
        return _fail(EXIT_INVALID, "config", str(exc), exc.errors)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail(EXIT_INVALID, "io", str(exc))
    except (LinearSolveError, PicardDivergence, fn.UnresolvedError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except ValueError as exc:
        return _fail(EXIT_INVALID, "invalid", str(exc))


if __name__ == "__main__":
    sys.exit(main())
