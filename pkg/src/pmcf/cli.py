"""Command-line driver: ``pmcf flow|spectrum|geometry|sweep --config PATH``.

The configuration is one JSON document parsed strictly: every block and key
is known, misspellings are errors, and numeric ranges are checked before any
computation starts.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .ambient import AmbientMetric, horizon_radius, named_perturbation
from .diagnostics import fit_rate, write_series
from .errors import ConfigError, DomainError, GraphConditionError, PMCFError
from .flow import FlowConfig, Termination, bisect_threshold, max_sweep_eps, run
from .sphere import SphericalGrid, real_harmonic_max
from .stability import assemble, axisymmetric_even, spectrum, write_spectrum
from .surface import (
    RadialGraph,
    enclosed_volume,
    geometry,
    make_sphere,
    read_snapshot,
    write_snapshot,
)

log = logging.getLogger("pmcf")

COMMANDS = ("flow", "spectrum", "geometry", "sweep")

EXIT_CODES = {
    Termination.CONVERGED: 0,
    Termination.MAX_TIME: 2,
    Termination.GRAPH_FAIL: 3,
    Termination.BLOWUP: 4,
    Termination.FLOW_UNDEFINED: 5,
}
EXIT_CONFIG = 64
EXIT_FAILURE = 1

DEFAULTS = {
    "command": None,
    "seed": 0,
    "metric": {"n": 2, "m": 0.0, "perturbation": "none"},
    "initial": {"L": 24, "r0": 1.0, "modes": [], "snapshot": None},
    "flow": {
        "kind": "VPMCF",
        "dt": "auto",
        "c_cfl": 0.5,
        "t_max": 100.0,
        "tol_H": 1e-8,
        "dealias": True,
        "volume_renorm": False,
        "eps_graph": 1e-3,
        "max_steps": None,
    },
    "output": {"directory": "out", "record_every": 1, "snapshot_every": 0},
    "fit": {"field": "max_dev", "start_fraction": 0.5},
    "spectrum": {
        "enabled": False,
        "L_op": 12,
        "variant": "full",
        "constraint": "volume",
        "subspace": "all",
        "umbilic_tol": 1e-8,
        "cmc_tol": 1e-8,
    },
    "sweep": {"mode": [2, 0], "eps_min": 1e-3, "eps_max": None, "n_bisect": 8},
}


@dataclass
class RunSpec:
    command: str
    metric: AmbientMetric
    grid_L: int
    r0: float
    modes: list  # (l, m, eps)
    snapshot: Optional[Path]
    flow: FlowConfig
    output_dir: Path
    fit: dict
    spectrum: dict
    sweep: dict
    seed: int
    raw: dict = field(repr=False, default_factory=dict)


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _merge(defaults, given, where):
    if not isinstance(given, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        path = f"{where}.{key}" if where else key
        if key not in defaults:
            raise ConfigError(f"unknown key {path!r}")
        if isinstance(defaults[key], dict) and key != "perturbation":
            out[key] = _merge(defaults[key], value, path)
        else:
            out[key] = value
    return out


def _number(cfg, block, key, lo=None, hi=None, strict_lo=False, integer=False, allow_none=False):
    value = cfg[block][key]
    name = f"{block}.{key}"
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    if lo is not None and (value <= lo if strict_lo else value < lo):
        raise ConfigError(f"{name} = {value} out of range (must be {'>' if strict_lo else '>='} {lo})")
    if hi is not None and value > hi:
        raise ConfigError(f"{name} = {value} out of range (must be <= {hi})")
    return int(value) if integer else float(value)


def _flag(cfg, block, key):
    value = cfg[block][key]
    if not isinstance(value, bool):
        raise ConfigError(f"{block}.{key} must be true or false, got {value!r}")
    return value


def _choice(cfg, block, key, options):
    value = cfg[block][key]
    if value not in options:
        raise ConfigError(f"{block}.{key} must be one of {list(options)}, got {value!r}")
    return value


def _parse_modes(raw, L):
    if not isinstance(raw, list):
        raise ConfigError("initial.modes must be a list")
    modes = []
    for k, item in enumerate(raw):
        where = f"initial.modes[{k}]"
        if isinstance(item, dict):
            extra = set(item) - {"l", "m", "eps"}
            if extra:
                raise ConfigError(f"unknown key {where}.{sorted(extra)[0]!r}")
            try:
                l, m, eps = item["l"], item.get("m", 0), item["eps"]
            except KeyError as exc:
                raise ConfigError(f"{where} is missing key {exc.args[0]!r}") from None
        elif isinstance(item, list) and len(item) == 3:
            l, m, eps = item
        else:
            raise ConfigError(f"{where} must be {{l, m, eps}} or [l, m, eps]")
        if not (isinstance(l, int) and isinstance(m, int)) or isinstance(l, bool):
            raise ConfigError(f"{where}: degree and order must be integers")
        if not 0 <= l <= L or abs(m) > l:
            raise ConfigError(f"{where}: (l={l}, m={m}) must satisfy |m| <= l <= L={L}")
        if isinstance(eps, bool) or not isinstance(eps, (int, float)) or not math.isfinite(eps):
            raise ConfigError(f"{where}.eps must be a finite number")
        modes.append((l, m, float(eps)))
    return modes


def parse_config(path, command: Optional[str] = None, out_dir=None) -> RunSpec:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(), object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    cfg = _merge(DEFAULTS, raw, "")

    cmd = cfg["command"]
    if command is not None:
        if cmd is not None and cmd != command:
            raise ConfigError(f"command {cmd!r} in config conflicts with command line {command!r}")
        cmd = command
    if cmd not in COMMANDS:
        raise ConfigError(f"command must be one of {list(COMMANDS)}, got {cmd!r}")
    cfg["command"] = cmd

    n = _number(cfg, "metric", "n", integer=True)
    if n != 2:
        raise ConfigError(f"metric.n = {n} out of range (only n = 2 is discretised)")
    m = _number(cfg, "metric", "m", lo=0.0)
    try:
        pert = named_perturbation(cfg["metric"]["perturbation"], n=n, m=m)
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"metric.perturbation: {exc}") from None
    metric = AmbientMetric(n=n, m=m, perturbation=pert)
    rh = horizon_radius(metric)

    L = _number(cfg, "initial", "L", lo=2, hi=128, integer=True)
    r0 = _number(cfg, "initial", "r0", lo=0.0, strict_lo=True)
    if r0 <= rh:
        raise ConfigError(f"initial.r0 = {r0} out of range: must exceed the horizon radius {rh:.6g}")
    modes = _parse_modes(cfg["initial"]["modes"], L)
    snap = cfg["initial"]["snapshot"]
    if snap is not None:
        if not isinstance(snap, str):
            raise ConfigError("initial.snapshot must be a path string")
        snap = Path(snap)
        if not snap.is_absolute():
            snap = path.parent / snap
        if not snap.is_file():
            raise ConfigError(f"initial.snapshot: file not found: {snap}")

    dt = cfg["flow"]["dt"]
    if dt != "auto":
        dt = _number(cfg, "flow", "dt", lo=0.0, strict_lo=True)
    flow = FlowConfig(
        kind=_choice(cfg, "flow", "kind", ("VPMCF", "APMCF")),
        dt=dt,
        c_cfl=_number(cfg, "flow", "c_cfl", lo=0.0, strict_lo=True),
        t_max=_number(cfg, "flow", "t_max", lo=0.0, strict_lo=True),
        tol_H=_number(cfg, "flow", "tol_H", lo=0.0, strict_lo=True),
        dealias=_flag(cfg, "flow", "dealias"),
        volume_renorm=_flag(cfg, "flow", "volume_renorm"),
        eps_graph=_number(cfg, "flow", "eps_graph", lo=0.0),
        max_steps=_number(cfg, "flow", "max_steps", lo=1, integer=True, allow_none=True),
        record_every=_number(cfg, "output", "record_every", lo=1, integer=True),
        snapshot_every=_number(cfg, "output", "snapshot_every", lo=0, integer=True),
    )
    outdir = out_dir if out_dir is not None else cfg["output"]["directory"]
    if not isinstance(outdir, str | os.PathLike):
        raise ConfigError("output.directory must be a path string")

    fit = {
        "field": _choice(cfg, "fit", "field", ("max_dev", "l2_dev")),
        "start_fraction": _number(cfg, "fit", "start_fraction", lo=0.0, hi=0.95),
    }
    spec_block = {
        "enabled": _flag(cfg, "spectrum", "enabled"),
        "L_op": _number(cfg, "spectrum", "L_op", lo=0, hi=64, integer=True),
        "variant": _choice(cfg, "spectrum", "variant", ("full", "reduced")),
        "constraint": _choice(cfg, "spectrum", "constraint", ("volume", "area", "none")),
        "subspace": _choice(cfg, "spectrum", "subspace", ("all", "axisymmetric_even")),
        "umbilic_tol": _number(cfg, "spectrum", "umbilic_tol", lo=0.0, allow_none=True),
        "cmc_tol": _number(cfg, "spectrum", "cmc_tol", lo=0.0, allow_none=True),
    }
    mode = cfg["sweep"]["mode"]
    if not (isinstance(mode, list) and len(mode) == 2 and all(isinstance(v, int) for v in mode)):
        raise ConfigError("sweep.mode must be [l, m]")
    if not 1 <= mode[0] <= L or abs(mode[1]) > mode[0]:
        raise ConfigError(f"sweep.mode = {mode} out of range for L = {L}")
    sweep = {
        "mode": tuple(mode),
        "eps_min": _number(cfg, "sweep", "eps_min", lo=0.0, strict_lo=True),
        "eps_max": _number(cfg, "sweep", "eps_max", lo=0.0, strict_lo=True, allow_none=True),
        "n_bisect": _number(cfg, "sweep", "n_bisect", lo=1, hi=40, integer=True),
    }
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    cfg["output"]["directory"] = str(outdir)
    return RunSpec(cmd, metric, L, r0, modes, snap, flow, Path(outdir), fit, spec_block, sweep, seed, cfg)


# ---------------------------------------------------------------------------
# execution


def initial_graph(spec: RunSpec) -> RadialGraph:
    if spec.snapshot is not None:
        return read_snapshot(spec.snapshot, spec.metric)
    grid = SphericalGrid(spec.grid_L)
    base = make_sphere(grid, spec.metric, spec.r0)
    shape = np.ones(grid.shape)
    for l, m, eps in spec.modes:
        shape = shape + eps * grid.real_harmonic(l, m) / real_harmonic_max(l, m)
    return base.with_rho(base.rho * shape)


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not JSON serialisable: {type(v).__name__}")


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _base_summary(spec: RunSpec, command: str) -> dict:
    return {
        "command": command,
        "tool_version": __version__,
        "config_echo": json.dumps(spec.raw, sort_keys=True, default=_jsonable),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def _late_fit(rows, fit_cfg):
    if len(rows) < 10:
        return None
    t_end = rows[-1].t
    window = (fit_cfg["start_fraction"] * t_end, t_end)
    try:
        return fit_rate(rows, fit_cfg["field"], window)
    except DomainError:
        return None


def _spectrum_of(graph, cfg):
    op = assemble(
        graph,
        cfg["L_op"],
        variant=cfg["variant"],
        umbilic_tol=cfg["umbilic_tol"],
        cmc_tol=cfg["cmc_tol"],
    )
    select = axisymmetric_even if cfg["subspace"] == "axisymmetric_even" else None
    return spectrum(op, cfg["constraint"], select=select)


def _flow_job(spec: RunSpec, outdir: Path, progress=None):
    """Run one flow into ``outdir``; returns (summary, exit code)."""
    outdir.mkdir(parents=True, exist_ok=True)
    summary = _base_summary(spec, "flow")
    try:
        init = initial_graph(spec)
    except DomainError as exc:
        summary.update(termination=Termination.GRAPH_FAIL.value, message=str(exc), final_t=0.0, steps=0)
        _write_json(summary, outdir / "summary.json")
        return summary, EXIT_CODES[Termination.GRAPH_FAIL]
    res = run(init, spec.flow, progress=progress)
    write_series(res.rows, outdir / "series.csv")
    for step_index, rho in res.snapshots:
        write_snapshot(init.with_rho(rho), outdir / f"snap_{step_index}.csv")

    final = res.state.graph
    if spec.flow.kind.value == "VPMCF":
        quantity, ref = "volume", res.volume0
        now = res.rows[-1].volume if res.rows else None
    else:
        quantity, ref = "area", res.area0
        now = res.rows[-1].area if res.rows else None
    fit = _late_fit(res.rows, spec.fit)
    summary.update(
        termination=res.termination.value,
        message=res.message,
        final_t=res.state.t,
        steps=res.state.step_index,
        final_max_dev=res.final_max_dev,
        r_ref=res.r_ref,
        sup_dist=res.sup_dist,
        conserved_quantity=quantity,
        conservation_drift=None if now is None else abs(now - ref) / abs(ref),
        fit_lambda=None if fit is None else fit.rate,
        fit_r2=None if fit is None else fit.r2,
        fit_window_start=None if fit is None else fit.window[0],
        fit_window_end=None if fit is None else fit.window[1],
    )
    if spec.spectrum["enabled"] and res.converged:
        cfg = dict(spec.spectrum)
        if spec.metric.perturbation is not None:
            cfg.update(umbilic_tol=None, cmc_tol=None)
        rep = _spectrum_of(final, cfg)
        write_spectrum(rep, outdir / "spectrum.csv")
        summary.update(predicted_rate=rep.predicted_rate, variant=rep.variant, constraint=rep.constraint)
    summary = {k: _clean(v) for k, v in summary.items()}
    _write_json(summary, outdir / "summary.json")
    return summary, EXIT_CODES[res.termination]


def cmd_flow(spec: RunSpec, quiet=False) -> int:
    def progress(row):
        if not quiet and row.step is not None and row.step % (50 * spec.flow.record_every) == 0:
            log.info("t=%.4f  max|H-avg|=%.3e  area=%.12g  volume=%.12g", row.t, row.max_dev, row.area, row.volume)

    summary, code = _flow_job(spec, spec.output_dir, progress)
    log.info("flow terminated: %s (t=%.6g)", summary["termination"], summary["final_t"])
    return code


def cmd_spectrum(spec: RunSpec, quiet=False) -> int:
    outdir = spec.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    rep = _spectrum_of(initial_graph(spec), spec.spectrum)
    write_spectrum(rep, outdir / "spectrum.csv")
    summary = _base_summary(spec, "spectrum")
    summary.update(
        predicted_rate=rep.predicted_rate,
        l0_eigenvalue=rep.l0_eigenvalue,
        largest_eigenvalue=float(rep.eigenvalues[-1]),
        variant=rep.variant,
        constraint=rep.constraint,
        subspace=spec.spectrum["subspace"],
        L_op=spec.spectrum["L_op"],
    )
    _write_json(summary, outdir / "summary.json")
    log.info("predicted rate %.10g", rep.predicted_rate)
    return 0


GEOMETRY_COLUMNS = ("theta", "phi", "rho", "H", "kappa1", "kappa2", "ring", "chi", "dmu")


def cmd_geometry(spec: RunSpec, quiet=False) -> int:
    outdir = spec.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    summary = _base_summary(spec, "geometry")
    try:
        graph = initial_graph(spec)
        f = geometry(graph, eps_graph=spec.flow.eps_graph)
    except (GraphConditionError, DomainError) as exc:
        summary.update(termination=Termination.GRAPH_FAIL.value, message=str(exc))
        _write_json(summary, outdir / "summary.json")
        log.error("%s", exc)
        return EXIT_CODES[Termination.GRAPH_FAIL]
    grid = graph.grid
    cols = [grid.TH, grid.PH, graph.rho, f.H, f.kappa1, f.kappa2, np.sqrt(np.maximum(f.ring2, 0)), f.chi, f.dmu]
    with open(outdir / "geometry.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GEOMETRY_COLUMNS)
        for vals in zip(*(c.ravel() for c in cols)):
            w.writerow([repr(float(v)) for v in vals])
    vol = enclosed_volume(graph)
    summary.update(
        area=f.area,
        volume=vol,
        iso_ratio=f.area**3 / vol**2,
        mean_H=f.integrate(f.H) / f.area,
        max_ring=float(np.sqrt(np.max(f.ring2))),
        min_chi=float(np.min(f.chi)),
        L=grid.L,
    )
    _write_json(summary, outdir / "summary.json")
    return 0


def cmd_sweep(spec: RunSpec, quiet=False) -> int:
    outdir = spec.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    counter = iter(range(10**6))

    def probe(eps):
        k = next(counter)
        sub = copy.copy(spec)
        sub.modes = list(spec.modes) + [(*spec.sweep["mode"], eps)]
        summary, code = _flow_job(sub, outdir / f"probe_{k:02d}")
        if not quiet:
            log.info("probe %d: eps=%.6g -> %s", k, eps, summary["termination"])
        return summary["termination"] == Termination.CONVERGED.value, summary["termination"]

    eps_max = spec.sweep["eps_max"]
    if eps_max is None:
        eps_max = max_sweep_eps(spec.metric, spec.r0, spec.sweep["mode"])
    result = bisect_threshold(probe, spec.sweep["eps_min"], eps_max, spec.sweep["n_bisect"])
    with open(outdir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps", "termination"])
        for eps, term in result.probes:
            w.writerow([repr(float(eps)), Termination(term).value])
    summary = _base_summary(spec, "sweep")
    summary.update(
        eps_star=result.eps_star,
        eps_max=result.eps_max,
        basin_exceeds_probe=result.basin_exceeds_probe,
        probes=len(result.probes),
    )
    _write_json(summary, outdir / "summary.json")
    return 0


HANDLERS = {"flow": cmd_flow, "spectrum": cmd_spectrum, "geometry": cmd_geometry, "sweep": cmd_sweep}


def execute(spec: RunSpec, quiet: bool = False) -> int:
    return HANDLERS[spec.command](spec, quiet=quiet)


def build_parser():
    p = argparse.ArgumentParser(prog="pmcf", description="Constrained mean curvature flow of radial graphs.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output.directory)")
    p.add_argument("--quiet", action="store_true", help="suppress progress logging")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        spec = parse_config(args.config, command=args.command, out_dir=args.out)
    except ConfigError as exc:
        print(f"pmcf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return execute(spec, quiet=args.quiet)
    except OSError as exc:
        print(f"pmcf: I/O error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FAILURE
    except PMCFError as exc:
        print(f"pmcf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
