"""Command-line driver: run, steady, analyze, preset.

Exit codes: 0 success, 2 configuration error, 3 integrator failure,
4 at least one bound check failed.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analysis, steady
from .errors import ConfigError, IntegratorError, MemsError
from .integrator import SERIES_COLUMNS, run
from .model import BALL, INTERVAL, InitialData, ProblemSpec, SolutionState
from .quadrature import MeshState

log = logging.getLogger("memsquench")

EXIT_OK, EXIT_CONFIG, EXIT_INTEGRATOR, EXIT_CHECKS = 0, 2, 3, 4

PRESETS = {
    "fig1": dict(lam=8.6),
    "fig2": dict(lam=10.0),
    "fig3": dict(lam=10.0),
    "fig4": dict(lam=10.0),
    "fig5": dict(lam=71.0, alpha=2.0, dim=2, geometry=BALL),
    "fig6": dict(lam=71.0, alpha=2.0, dim=2, geometry=BALL),
    "subcritical": dict(lam=6.0),
    "kaplan": dict(lam=6.0, initial_data=InitialData("bump", 0.97)),
}

# flat config keys -> (ProblemSpec field, converter)
SPEC_KEYS = {
    "lambda": ("lam", float),
    "alpha": ("alpha", float),
    "dim": ("dim", int),
    "geometry": ("geometry", str),
    "mesh_size": ("mesh_size", int),
    "epsilon": ("epsilon", float),
    "u0": ("initial_data", InitialData.parse),
    "t_max": ("t_max", float),
    "v_stop": ("v_stop", float),
    "smoothing_passes": ("smoothing_passes", int),
    "steady_tol": ("steady_tol", float),
}
OTHER_KEYS = {"subcommand", "out", "preset", "delta_grid", "input"}


@dataclass
class RunConfig:
    subcommand: str = "run"
    spec: ProblemSpec = field(default_factory=ProblemSpec)
    out: Path = Path("out")
    preset: str | None = None
    delta_grid: np.ndarray | None = None
    input: Path | None = None


def _parse_grid(text: str) -> np.ndarray:
    """``lo:hi:n`` (log-spaced) or a comma-separated list of deltas."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return np.logspace(np.log10(float(lo)), np.log10(float(hi)), int(n))[::-1]
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"bad delta grid {text!r}") from None


def read_items(text: str) -> dict:
    """``key=value`` lines (``#`` comments, dashes in keys allowed) as a dict."""
    items = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        items[key.replace("-", "_")] = val
    return items


def parse_config(source: str | dict | None = None) -> RunConfig:
    """Build a validated RunConfig from ``key=value`` text or a dict of flat keys."""
    if source is None:
        items = {}
    elif isinstance(source, dict):
        items = {k: v for k, v in source.items() if v is not None}
    else:
        items = read_items(source)
    unknown = set(items) - set(SPEC_KEYS) - OTHER_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = RunConfig(subcommand=items.get("subcommand", "run"))
    base = {}
    if "preset" in items:
        name = items["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        cfg.preset = name
        base.update(PRESETS[name])
    for key, (name, conv) in SPEC_KEYS.items():
        if key in items:
            val = items[key]
            try:
                base[name] = val if not isinstance(val, str) else conv(val)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {val!r}") from None
    if base.get("geometry") == BALL and "dim" not in base:
        base["dim"] = 2
    cfg.spec = ProblemSpec(**base)
    if "out" in items:
        cfg.out = Path(items["out"])
    if "delta_grid" in items:
        g = items["delta_grid"]
        cfg.delta_grid = _parse_grid(g) if isinstance(g, str) else np.asarray(g, float)
        if np.any((cfg.delta_grid <= 0) | (cfg.delta_grid > 1)):
            raise ConfigError("delta grid values must lie in (0, 1]")
    if "input" in items:
        cfg.input = Path(items["input"])
    return cfg


# ---------------------------------------------------------------- output

def write_frame(path: Path, state: SolutionState) -> None:
    np.savetxt(path, np.column_stack([state.X, state.u]), delimiter=",",
               header="x,u", comments="", fmt="%.17g")


def write_series(path: Path, series: dict) -> None:
    data = np.column_stack([series[c] for c in SERIES_COLUMNS])
    np.savetxt(path, data, delimiter=",", header=",".join(SERIES_COLUMNS),
               comments="", fmt="%.17g")


def write_branch(path: Path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(steady.BRANCH_COLUMNS)
        for p in points:
            w.writerow([repr(float(v)) for v in p.row()])


def write_spec(path: Path, spec: ProblemSpec) -> None:
    with open(path, "w") as fh:
        for f in fields(spec):
            val = getattr(spec, f.name)
            fh.write(f"{f.name}={val.describe() if f.name == 'initial_data' else val}\n")


def read_run(out: Path):
    """Load the frames and series written by ``write_run``."""
    series_data = np.genfromtxt(out / "series.csv", delimiter=",", names=True)
    series = {c: np.atleast_1d(series_data[c]) for c in SERIES_COLUMNS}
    index = np.atleast_2d(np.loadtxt(out / "frames" / "index.csv", delimiter=",", skiprows=1))
    frames = []
    for i, t, tau in index:
        xu = np.loadtxt(out / "frames" / f"frame_{int(i):05d}.csv", delimiter=",", skiprows=1)
        frames.append(SolutionState(tau, t, MeshState(xu[:, 0]), xu[:, 1]))
    return frames, series


def write_run(out: Path, result) -> None:
    """Frames as frames/frame_NNNNN.csv (x,u) with times in frames/index.csv, plus series.csv."""
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    for old in frames_dir.glob("frame_*.csv"):
        old.unlink()
    for i, fr in enumerate(result.frames):
        write_frame(frames_dir / f"frame_{i:05d}.csv", fr)
    index = np.array([[i, fr.t, fr.tau] for i, fr in enumerate(result.frames)])
    np.savetxt(frames_dir / "index.csv", index, delimiter=",", header="frame,t,tau",
               comments="", fmt=["%d", "%.17g", "%.17g"])
    write_series(out / "series.csv", result.series)
    write_spec(out / "spec.txt", result.spec)


# ---------------------------------------------------------------- commands

def subcritical_crosscheck(spec: ProblemSpec, final: SolutionState):
    """Max-norm distance between a steady run and the lower shooting branch at the same lambda."""
    point = steady.find_lower_branch(spec.lam, spec.alpha, spec.dim, spec.geometry)
    shot = steady.shoot(point.delta, spec.dim, spec.geometry)
    return float(np.max(np.abs(shot.w(final.X, spec.geometry) - final.u))), point


def do_run(cfg: RunConfig, analyze_after: bool) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    try:
        result = run(cfg.spec)
    except IntegratorError as exc:
        log.error("integration failed: %s", exc)
        if exc.last_state is not None:
            write_frame(cfg.out / "last_state.csv", exc.last_state)
        return EXIT_INTEGRATOR
    write_run(cfg.out, result)
    print(f"outcome={result.outcome} t={result.final.t:.10g} max_u={result.final.max_u:.10g} "
          f"steps={result.steps}")
    if result.outcome == "failed":
        log.error("run failed: %s", result.message)
        return EXIT_INTEGRATOR
    if not analyze_after:
        return EXIT_OK
    return _report(cfg, result.frames, result.series, result.outcome)


def _report(cfg: RunConfig, frames, series, outcome) -> int:
    spec = cfg.spec
    rep = analysis.analyze(frames, series, spec, outcome)
    if outcome == "steady":
        try:
            dist, point = subcritical_crosscheck(spec, frames[-1])
            rep.notes.append(f"steady profile vs shooting branch (delta={point.delta:.10g}): "
                             f"max difference {dist:.3g}")
            rep.bound_checks.append(("steady_vs_shooting", dist <= 1e-3, 1e-3 - dist))
        except MemsError as exc:
            rep.notes.append(f"steady cross-check unavailable: {exc}")
    rep.write(cfg.out)
    for name, ok, margin in rep.bound_checks:
        print(f"{name:<24}{'PASS' if ok else 'FAIL':<6}{margin:.6g}")
    return EXIT_OK if rep.all_passed else EXIT_CHECKS


def do_analyze(cfg: RunConfig) -> int:
    src = cfg.input or cfg.out
    try:
        frames, series = read_run(src)
        spec_items = dict(line.strip().split("=", 1) for line in open(src / "spec.txt"))
    except OSError as exc:
        raise ConfigError(f"cannot read run directory {src}: {exc}") from None
    cfg.spec = _spec_from_items(spec_items)
    gap = 1.0 - series["max_u"][-1]
    outcome = "quench" if gap < cfg.spec.v_stop else "steady"
    return _report(cfg, frames, series, outcome)


def _spec_from_items(items: dict) -> ProblemSpec:
    conv = {f.name: f.type for f in fields(ProblemSpec)}
    kw = {}
    for name, val in items.items():
        if name == "initial_data":
            kw[name] = InitialData.parse(val) if not val.startswith("table") else InitialData()
        elif name in ("dim", "mesh_size", "smoothing_passes"):
            kw[name] = int(val)
        elif name == "geometry":
            kw[name] = val
        elif name in conv:
            kw[name] = float(val)
    return ProblemSpec(**kw)


def do_steady(cfg: RunConfig) -> int:
    spec = cfg.spec
    cfg.out.mkdir(parents=True, exist_ok=True)
    points, gaps = steady.trace_branch(spec.alpha, spec.dim, spec.geometry, cfg.delta_grid)
    write_branch(cfg.out / "branch.csv", points)
    lam_star, d_star = steady.lambda_star(points, spec.alpha, spec.dim, spec.geometry)
    end = min(points, key=lambda p: p.delta) if points else None
    with open(cfg.out / "steady.txt", "w") as fh:
        fh.write(f"lambda_star={lam_star!r}\ndelta_star={d_star!r}\n")
        if end is not None:
            fh.write(f"lambda_endpoint={end.lam!r}\ndelta_endpoint={end.delta!r}\n")
        fh.write(f"failed_deltas={','.join(repr(g) for g in gaps)}\n")
    print(f"lambda_star={lam_star:.10g} delta_star={d_star:.10g} points={len(points)}")
    return EXIT_OK


def _sweep_one(item):
    cfg, analyze_after = item
    return do_run(cfg, analyze_after)


def execute(cfg: RunConfig, workers: int = 1, sweep: list | None = None) -> int:
    if cfg.subcommand == "steady":
        return do_steady(cfg)
    if cfg.subcommand == "analyze":
        return do_analyze(cfg)
    analyze_after = cfg.subcommand == "preset"
    if not sweep:
        return do_run(cfg, analyze_after)
    jobs = []
    for lam in sweep:
        sub = RunConfig(cfg.subcommand, cfg.spec.with_(lam=lam), cfg.out / f"lambda_{lam:g}")
        jobs.append((sub, analyze_after))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        codes = list(ex.map(_sweep_one, jobs))
    return max(codes)


# ---------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memsquench",
                                description="Moving-mesh simulation of nonlocal MEMS quenching.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="file of key=value lines")
        sp.add_argument("--out", type=Path)
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--dim", type=int)
        sp.add_argument("--geometry", choices=(INTERVAL, BALL))

    r = sub.add_parser("run", help="time integration")
    common(r)
    r.add_argument("--lambda", dest="lambda_", type=float)
    r.add_argument("--mesh-size", type=int)
    r.add_argument("--epsilon", type=float)
    r.add_argument("--u0", help="zero | bump:a | file:path")
    r.add_argument("--t-max", type=float)
    r.add_argument("--analyze", action="store_true", help="also write the quench report")
    r.add_argument("--sweep", help="comma-separated lambdas run in parallel")
    r.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("steady", help="steady branch and lambda*")
    common(s)
    s.add_argument("--delta-grid", help="lo:hi:n (log-spaced) or comma list")

    a = sub.add_parser("analyze", help="report for a finished run directory")
    a.add_argument("input", type=Path)
    a.add_argument("--out", type=Path)

    pr = sub.add_parser("preset", help="named configuration, integration and report")
    pr.add_argument("name", choices=sorted(PRESETS))
    pr.add_argument("--out", type=Path)
    pr.add_argument("--mesh-size", type=int)
    pr.add_argument("--epsilon", type=float)
    return p


def _items_from_args(args) -> dict:
    items = {}
    cfg_file = getattr(args, "config", None)
    if cfg_file is not None:
        try:
            text = cfg_file.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {cfg_file}: {exc}") from None
        items.update(read_items(text))
    flag_map = {"lambda_": "lambda", "mesh_size": "mesh_size", "t_max": "t_max",
                "delta_grid": "delta_grid", "name": "preset"}
    for key, val in vars(args).items():
        if key in ("verbose", "config", "analyze", "sweep", "workers") or val is None:
            continue
        items[flag_map.get(key, key)] = val if not isinstance(val, Path) else str(val)
    if args.subcommand == "analyze" and "out" not in items:
        items["out"] = items["input"]
    items["subcommand"] = args.subcommand
    return items


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(_items_from_args(args))
        sweep = None
        if getattr(args, "sweep", None):
            try:
                sweep = [float(v) for v in args.sweep.split(",")]
            except ValueError:
                raise ConfigError(f"bad sweep list {args.sweep!r}") from None
        if args.subcommand == "run" and args.analyze:
            cfg.subcommand = "preset"
        return execute(cfg, getattr(args, "workers", 1), sweep)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegratorError as exc:
        print(f"integrator error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR


if __name__ == "__main__":
    sys.exit(main())
