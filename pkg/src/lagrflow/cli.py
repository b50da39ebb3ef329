"""Command-line front end.

    lagrflow list
    lagrflow verify CONFIG
    lagrflow sample CONFIG
    lagrflow vorticity CONFIG

Exit status is 0 on success, 1 when a verification check fails and 2 for
configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import families, integrator, spatial, temporal, verify
from .exprcore import ExprError
from .flowmap import FlowMap

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
DEFAULT_BOX = spatial.DOMAIN

_KNOWN_KEYS = {"family", "constants", "free", "spatial", "init", "horizon", "grid", "tol",
               "out", "sample", "vorticity", "perturb", "seed"}


class ConfigError(ValueError):
    """A problem with one field of a run configuration."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass
class RunConfig:
    family: str
    constants: Optional[dict] = None
    free: Optional[dict] = None
    spatial: Optional[dict] = None
    init: Optional[dict] = None
    horizon: Optional[tuple] = None
    perturb: Optional[dict] = None
    n_space: int = 5
    n_time: int = 20
    box: tuple = DEFAULT_BOX
    tol: float = 1e-6
    out: Optional[str] = None
    seed: int = 0
    particles: int = 8
    sample_times: int = 41
    vorticity_points: int = 4
    vorticity_times: int = 5


def _mapping(raw, key):
    val = raw.get(key)
    if val is None:
        return None
    if not isinstance(val, dict):
        raise ConfigError(key, "must be a JSON object")
    return dict(val)


def _number(val, path, kind=float, positive=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(path, f"must be a number, got {val!r}")
    if kind is int and int(val) != val:
        raise ConfigError(path, f"must be an integer, got {val!r}")
    val = kind(val)
    if positive and val <= 0:
        raise ConfigError(path, f"must be positive, got {val!r}")
    return val


def parse_config(raw) -> RunConfig:
    """Validate the JSON structure of a config (not the mathematics)."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(raw) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    family = raw.get("family")
    if family is None:
        raise ConfigError("family", "missing")
    if family not in families.REGISTRY:
        raise ConfigError("family", f"unknown family {family!r}")
    cfg = RunConfig(family=family)
    for key in ("constants", "free", "spatial", "init", "perturb"):
        setattr(cfg, key, _mapping(raw, key))
    for key in ("constants", "perturb"):
        for name, val in (getattr(cfg, key) or {}).items():
            _number(val, f"{key}.{name}")
    for name, val in (cfg.free or {}).items():
        if not isinstance(val, (str, int, float)) or isinstance(val, bool):
            raise ConfigError(f"free.{name}", "must be an expression string or a number")
    for name, val in (cfg.spatial or {}).items():
        if not isinstance(val, (str, int, float)) or isinstance(val, bool):
            raise ConfigError(f"spatial.{name}", "must be an expression string or a number")
    if "horizon" in raw:
        hz = raw["horizon"]
        if not isinstance(hz, list) or len(hz) != 2:
            raise ConfigError("horizon", "must be a list [t0, t1]")
        t0, t1 = (_number(x, f"horizon[{i}]") for i, x in enumerate(hz))
        if not t1 > t0:
            raise ConfigError("horizon", f"t1 must exceed t0, got {hz}")
        cfg.horizon = (t0, t1)
    grid = _mapping(raw, "grid") or {}
    for key in grid:
        if key not in ("n_space", "n_time", "box"):
            raise ConfigError(f"grid.{key}", "unknown field")
    if "n_space" in grid:
        cfg.n_space = _number(grid["n_space"], "grid.n_space", int, positive=True)
    if "n_time" in grid:
        cfg.n_time = _number(grid["n_time"], "grid.n_time", int, positive=True)
    if "box" in grid:
        box = grid["box"]
        if not isinstance(box, list) or len(box) != 2:
            raise ConfigError("grid.box", "must be a list [lo, hi]")
        lo, hi = (_number(x, f"grid.box[{i}]") for i, x in enumerate(box))
        if not hi > lo:
            raise ConfigError("grid.box", "hi must exceed lo")
        cfg.box = (lo, hi)
    if "tol" in raw:
        cfg.tol = _number(raw["tol"], "tol", positive=True)
    if "seed" in raw:
        cfg.seed = _number(raw["seed"], "seed", int)
    if "out" in raw:
        if not isinstance(raw["out"], str):
            raise ConfigError("out", "must be a path string")
        cfg.out = raw["out"]
    samp = _mapping(raw, "sample") or {}
    for key, attr in (("particles", "particles"), ("n_time", "sample_times")):
        if key in samp:
            setattr(cfg, attr, _number(samp[key], f"sample.{key}", int, positive=True))
    for key in samp:
        if key not in ("particles", "n_time"):
            raise ConfigError(f"sample.{key}", "unknown field")
    vort = _mapping(raw, "vorticity") or {}
    for key, attr in (("n_space", "vorticity_points"), ("n_time", "vorticity_times")):
        if key in vort:
            setattr(cfg, attr, _number(vort[key], f"vorticity.{key}", int, positive=True))
    for key in vort:
        if key not in ("n_space", "n_time"):
            raise ConfigError(f"vorticity.{key}", "unknown field")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(raw)


def build(cfg: RunConfig) -> FlowMap:
    """Construct the flow map, mapping every construction error to a field."""
    try:
        return families.build_flowmap(cfg.family, constants=cfg.constants, free=cfg.free,
                                      spatial_fns=cfg.spatial, horizon=cfg.horizon,
                                      init=cfg.init, perturb=cfg.perturb)
    except temporal.AdmissibilityError as exc:
        name, msg = exc.violations[0]
        prefix = "" if name.startswith(("free.", "horizon", "init")) else "constants."
        raise ConfigError(prefix + name, msg) from None
    except spatial.SpatialSchemaError as exc:
        raise ConfigError(f"spatial.{exc.field}", str(exc).split(": ", 2)[-1]) from None
    except spatial.SpatialConstraintError as exc:
        raise ConfigError("spatial", str(exc)) from None
    except spatial.ExtensionError as exc:
        raise ConfigError("spatial", str(exc)) from None
    except ExprError as exc:
        raise ConfigError("expression", str(exc)) from None
    except KeyError as exc:
        raise ConfigError("perturb" if cfg.perturb else "config", str(exc.args[0])) from None
    except temporal.RootLossError as exc:
        raise ConfigError("constants", str(exc)) from None


# ------------------------------------------------------------------ output

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([r if isinstance(r, (int, np.integer)) else _fmt(r) for r in row])


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(cfg: RunConfig, args) -> Path:
    return Path(args.out or cfg.out or ".")


def _interior_labels(fm: FlowMap, n: int, seed: int, box) -> np.ndarray:
    return spatial.sample_points(n, seed=seed, box=box, v=fm.v)


def _blowup_meta(fm: FlowMap) -> dict:
    tc = fm.tc
    return {"family": fm.family, "requested_horizon": list(tc.requested_horizon),
            "horizon": list(tc.horizon), "truncated": tc.blowup is not None,
            "blowup": tc.blowup}


def trajectory_rows(fm: FlowMap, labels: np.ndarray, times) -> list:
    rows = []
    Z = labels.T
    V = fm.v.values(Z)
    for t in times:
        A, Ad, _ = fm.tc.eval_A(t)
        X, U = A @ V, Ad @ V
        for pid in range(Z.shape[1]):
            rows.append((pid, t, *X[:, pid], *U[:, pid]))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def vorticity_rows(fm: FlowMap, labels: np.ndarray, times) -> list:
    rows = []
    Z = labels.T
    V = fm.v.values(Z)
    for t in times:
        A = fm.tc.eval_A(t)[0]
        X = A @ V
        W = verify.eulerian_vorticity(fm, Z, t)
        for i in range(Z.shape[1]):
            rows.append((t, *X[:, i], *W[:, i]))
    return rows


# ---------------------------------------------------------------- commands

def cmd_list(args) -> int:
    fams = families.list_families()
    if args.json:
        print(json.dumps([{"id": d.id, "m": d.m, "anchor": d.anchor, "det": d.det_expression,
                           "vorticity": d.vorticity, "constants": list(d.catalog.constants),
                           "free": list(d.free_functions), "spatial": list(d.catalog.spatial)}
                          for d in fams], indent=2))
    else:
        width = max(len(d.id) for d in fams)
        for d in fams:
            print(f"{d.id:<{width}}  m={d.m}  {d.anchor}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    tol = args.tol if args.tol is not None else cfg.tol
    fm = build(cfg)
    report = verify.constancy_report(fm, n_space=cfg.n_space, n_time=cfg.n_time, tol=tol,
                                     box=cfg.box)
    out = _out_dir(cfg, args)
    _write_json(out / "report.json", report.to_dict())
    if args.json:
        print(report.to_json(indent=2, sort_keys=True))
    else:
        for name, chk in report.checks.items():
            print(f"{'PASS' if chk.passed else 'FAIL'}  {name:<20s} residual={chk.residual:.3e}  tol={chk.tol:g}")
        if fm.tc.blowup:
            print(f"horizon truncated at t={fm.tc.horizon[1]:.6g}: {fm.tc.blowup.get('reason', '')}")
    if not report.passed:
        names = ", ".join(report.failures())
        print(f"verification failed: {names}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    fm = build(cfg)
    out = _out_dir(cfg, args)
    labels = _interior_labels(fm, cfg.particles, seed, cfg.box)
    times = fm.tc.sample_times(cfg.sample_times)
    _write_csv(out / "trajectories.csv", ("particle_id", "t", "x1", "x2", "x3", "u1", "u2", "u3"),
               trajectory_rows(fm, labels, times))
    snaps = fm.tc.sample_times(cfg.vorticity_times)
    grid = verify.grid_points(cfg.vorticity_points, _shrunk(cfg.box)).T
    _write_csv(out / "vorticity.csv", ("t", "x1", "x2", "x3", "w1", "w2", "w3"),
               vorticity_rows(fm, grid, snaps))
    meta = _blowup_meta(fm)
    meta.update({"seed": seed, "particles": cfg.particles, "n_time": cfg.sample_times})
    _write_json(out / "sample_meta.json", meta)
    if args.json:
        print(json.dumps(meta, indent=2, sort_keys=True))
    else:
        print(f"wrote {out / 'trajectories.csv'} and {out / 'vorticity.csv'}")
        if meta["truncated"]:
            print(f"horizon truncated at t={fm.tc.horizon[1]:.6g} (see sample_meta.json)")
    return EXIT_OK


def cmd_vorticity(args) -> int:
    cfg = load_config(args.config)
    fm = build(cfg)
    out = _out_dir(cfg, args)
    snaps = fm.tc.sample_times(cfg.vorticity_times)
    grid = verify.grid_points(cfg.vorticity_points, _shrunk(cfg.box)).T
    _write_csv(out / "vorticity.csv", ("t", "x1", "x2", "x3", "w1", "w2", "w3"),
               vorticity_rows(fm, grid, snaps))
    meta = _blowup_meta(fm)
    _write_json(out / "vorticity_meta.json", meta)
    if args.json:
        print(json.dumps(meta, indent=2, sort_keys=True))
    else:
        print(f"wrote {out / 'vorticity.csv'}")
    return EXIT_OK


def _shrunk(box):
    # keep snapshot labels off the boundary of the label box
    lo, hi = box
    pad = 0.1 * (hi - lo)
    return (lo + pad, hi - pad)


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("--tol", type=float, help="override the verification tolerance")
    common.add_argument("--seed", type=int, help="seed for sampled particle labels")
    common.add_argument("--out", help="output directory (default: config 'out' or '.')")
    parser = argparse.ArgumentParser(prog="lagrflow",
                                     description="Exact Lagrangian solutions of the Euler equations")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", parents=[common], help="list the solution families").set_defaults(func=cmd_list)
    for name, func, text in (("verify", cmd_verify, "certify that h and alpha are constant in time"),
                             ("sample", cmd_sample, "export particle trajectories and vorticity"),
                             ("vorticity", cmd_vorticity, "export vorticity snapshots")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("config", help="JSON run configuration")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (verify.SingularMapError, verify.NewtonError, integrator.IntegrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
