"""Command-line entry points.

Every subcommand reads a config (file path or preset name), writes its traces
and JSON reports into ``--out`` and finishes with a ``manifest.json`` listing
the produced files.  Failures print a JSON error document to stderr and exit
nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .config import PRESETS, RunConfig, load_config, serialize_config
from .exceptions import RydNeptError, SchemaError
from .metrology import (
    at_calibration,
    fisher,
    fit_eta,
    max_slope,
    noise_variance,
)
from .storage import (
    SCHEMA_VERSION,
    RunManifest,
    _jsonable,
    read_columns,
    read_trace,
    write_report,
    write_trace,
)
from .sweep import (
    hysteresis_pair,
    jump_position,
    loop_area,
    run_grid,
    sweep_detuning,
    sweep_mw_amplitude,
)
from .trace import SweepSpec, Trace
from .workflows import at_spectrum, fisher_scaling, sensing_run, shift_family

log = logging.getLogger("rydnept")

EXIT_FAILURE = 1
EXIT_CONFIG = 2

# default MW scan when the config's sweep is on the detuning axis
SENSING_SCAN = dict(axis="mw_amplitude", start=4.6, stop=5.2, rate=0.002, t_int=5.0, stepped=True)


class Run:
    """Output directory, manifest and file bookkeeping for one command."""

    def __init__(self, command: str, cfg: RunConfig, args):
        self.cfg = cfg
        self.fmt = args.format
        self.outdir = cfg.output
        os.makedirs(self.outdir, exist_ok=True)
        self.t0 = time.perf_counter()
        self.manifest = RunManifest(
            command=command, config_hash=cfg.digest(),
            seeds={"master": cfg.seed, "detector": cfg.detector.seed,
                   "sweep": cfg.sweep.seed})

    def path(self, name: str) -> str:
        return os.path.join(self.outdir, name)

    def trace(self, stem: str, tr: Trace) -> str:
        if self.fmt == "json":
            p = self.path(stem + ".json")
            write_report(p, "trace", {"axis": tr.axis, "units": tr.units, "x": tr.x,
                                      "y": tr.y, "meta": tr.meta})
        else:
            p = write_trace(self.path(stem + ".csv"), tr)
        self.manifest.add(p)
        return p

    def report(self, stem: str, kind: str, body: dict) -> str:
        p = write_report(self.path(stem + ".json"), kind, body)
        self.manifest.add(p)
        return p

    def config_copy(self) -> None:
        p = self.path("config.yaml")
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(serialize_config(self.cfg))
        self.manifest.add(p)

    def finish(self) -> str:
        self.config_copy()
        self.manifest.finished = RunManifest.__dataclass_fields__["started"].default_factory()
        self.manifest.wall_clock_s = round(time.perf_counter() - self.t0, 3)
        return self.manifest.write(self.outdir)


# --- subcommands ---------------------------------------------------------------

def _seeded_sweep(cfg: RunConfig, spec: SweepSpec | None = None) -> SweepSpec:
    return replace(spec or cfg.sweep, seed=cfg.seed)


def cmd_simulate_spectrum(cfg: RunConfig, args, run: Run) -> dict:
    spec = _seeded_sweep(cfg)
    if spec.axis != "coupling_detuning":
        raise SchemaError("simulate-spectrum needs a coupling_detuning sweep", "sweep.axis")
    out = {}
    for mode in cfg.modes:
        tr = sweep_detuning(cfg.physics, cfg.optics(mode), spec)
        out[mode] = run.trace(f"spectrum_{mode}", tr)
    return out


def _mw_spec(cfg: RunConfig) -> SweepSpec:
    if cfg.sweep.axis == "mw_amplitude":
        return _seeded_sweep(cfg)
    return SweepSpec(**SENSING_SCAN, seed=cfg.seed, mu0=cfg.sweep.mu0)


def cmd_sweep_mw(cfg: RunConfig, args, run: Run) -> dict:
    spec = _mw_spec(cfg)
    params = cfg.physics if args.delta_c is None else cfg.physics.replace(delta_c=args.delta_c)
    out = {}
    for mode in cfg.modes:
        tr = sweep_mw_amplitude(params, cfg.optics(mode), spec)
        out[mode] = run.trace(f"sweep_mw_{mode}", tr)
    return out


def cmd_hysteresis(cfg: RunConfig, args, run: Run) -> dict:
    spec = _seeded_sweep(cfg)
    body = {}
    for mode in cfg.modes:
        up, down = hysteresis_pair(cfg.physics, cfg.optics(mode), spec)
        run.trace(f"hysteresis_{mode}_{up.direction}", up)
        run.trace(f"hysteresis_{mode}_{down.direction}", down)
        body[mode] = {"jump_forward": jump_position(up), "jump_reverse": jump_position(down),
                      "loop_area": loop_area(up, down), "forward_direction": up.direction}
    run.report("hysteresis", "hysteresis", body)
    return body


def _parse_set(items) -> list:
    """``--set key=v1,v2`` pairs into a list of override dicts (outer product)."""
    overrides = [{}]
    for item in items or []:
        if "=" not in item:
            raise SchemaError(f"--set expects key=v1,v2,..., got {item!r}", "grid")
        key, vals = item.split("=", 1)
        values = [json.loads(v) if v not in ("up", "down") else v for v in vals.split(",")]
        overrides = [{**o, key: v} for o in overrides for v in values]
    return overrides


def cmd_grid(cfg: RunConfig, args, run: Run) -> dict:
    overrides = _parse_set(args.set) if args.set else list(cfg.grid["overrides"])
    spec = _seeded_sweep(cfg)
    body = {"cells": []}
    for mode in cfg.modes:
        res = run_grid(cfg.physics, cfg.optics(mode), spec, overrides,
                       master_seed=cfg.seed, threads=args.threads)
        for i, (ov, tr) in enumerate(zip(overrides, res.traces)):
            entry = {"index": i, "mode": mode, "override": ov}
            if tr is not None:
                entry["file"] = os.path.basename(run.trace(f"grid_{mode}_{i:03d}", tr))
            else:
                entry["error"] = res.errors[i]
            body["cells"].append(entry)
    run.report("grid", "grid", body)
    return body


def _analyze_one(tr: Trace, window: int, region) -> dict:
    cp = max_slope(tr, window)
    d = {"x_c": cp.x_c, "k": cp.k, "window": cp.window, "axis": tr.axis, "units": tr.units,
         "n_points": len(tr)}
    if region is not None:
        var = noise_variance(tr, region)
        f = fisher(cp.k, var)
        d.update(var=var, F=f.F, region=list(region))
    return d


def cmd_analyze(cfg: RunConfig, args, run: Run) -> dict:
    window = args.window or cfg.analysis["window"]
    region = args.region or cfg.analysis["noise_region"]
    body = {}
    for path in args.inputs:
        body[os.path.basename(path)] = _analyze_one(read_trace(path), window, region)
    run.report("analysis", "critical_point", body)
    return body


def cmd_fit_shift(cfg: RunConfig, args, run: Run) -> dict:
    delta_mw = cfg.physics.delta_mw
    mu0 = cfg.sweep.mu0
    if args.data:
        data = read_columns(args.data, 2)
        fit = fit_eta(data, delta_mw, mu0)
        body = {"source": os.path.basename(args.data), "fields": data[:, 0],
                "shifts": data[:, 1], "eta": fit.eta, "eta_ci": list(fit.ci),
                "rms": fit.rms, "delta_mw": delta_mw, "mu0": mu0}
        run.report("fit_shift", "eta_fit", body)
        return body
    sh = cfg.shift
    spec = cfg.sweep
    body = {"delta_mw": delta_mw, "mu0": mu0}
    for mode in cfg.modes:
        fam = shift_family(cfg.physics, cfg.optics(mode), sh["fields"], spec.start, spec.stop,
                           sh["total_time"], sh["n_points"], window=cfg.analysis["window"],
                           seed=cfg.seed, mu0=mu0)
        for E, tr in zip(fam.fields, fam.traces):
            run.trace(f"shift_{mode}_E{E:g}", tr)
        body[mode] = fam.to_dict()
    run.report("fit_shift", "eta_fit", body)
    return body


def cmd_fisher_scaling(cfg: RunConfig, args, run: Run) -> dict:
    region = cfg.analysis["noise_region"]
    if region is None:
        raise SchemaError("fisher-scaling needs analysis.noise_region", "analysis.noise_region")
    fs = cfg.fisher
    body = {}
    for mode in cfg.modes:
        res = fisher_scaling(cfg.physics, cfg.optics(mode), cfg.sweep.start, cfg.sweep.stop,
                             fs["total_times"], fs["n_points"], fs["t0"], region,
                             window=cfg.analysis["window"], seed=cfg.seed)
        for T, tr in zip(res.total_times, res.traces):
            run.trace(f"fisher_{mode}_T{T:g}", tr)
        body[mode] = res.to_dict()
    run.report("fisher_scaling", "fisher_scaling", body)
    return body


def cmd_calibrate_at(cfg: RunConfig, args, run: Run) -> dict:
    mu0 = cfg.sweep.mu0
    if args.input:
        tr = read_trace(args.input)
        source = os.path.basename(args.input)
    else:
        a = cfg.at
        if not cfg.physics.omega_mw > 0:
            raise SchemaError("calibrate-at needs physics.omega_mw > 0 to simulate a spectrum",
                              "physics.omega_mw")
        p = cfg.physics.replace(omega_p=a["omega_p"], omega_c=a["omega_c"], delta_mw=0.0, V=0.0)
        x = np.linspace(a["start"], a["stop"], a["n_points"])
        y = at_spectrum(p, cfg.medium.od0, x)
        tr = Trace(x, y / y.max(), "coupling_detuning", "MHz",
                   {"params": p.to_dict(), "kind": "at_spectrum"})
        run.trace("at_spectrum", tr)
        source = "simulated"
    cal = at_calibration(tr, mu0=mu0, kind=args.peaks)
    body = {"source": source, "omega_mw": cal.omega_mw, "E": cal.E, "peaks": list(cal.peaks),
            "mu0": mu0}
    run.report("calibrate_at", "at_calibration", body)
    return body


def cmd_sensitivity(cfg: RunConfig, args, run: Run) -> dict:
    spec = _mw_spec(cfg)
    s = cfg.sensing
    park = s["park_range"] or [cfg.sweep.start, cfg.sweep.stop]
    if cfg.sweep.axis == "mw_amplitude" and s["park_range"] is None and s["delta_c"] is None:
        raise SchemaError("sensitivity needs sensing.park_range or sensing.delta_c",
                          "sensing.park_range")
    body = {}
    for mode in cfg.modes:
        r = sensing_run(cfg.physics, cfg.optics(mode), spec, tuple(park),
                        n_samples=s["n_samples"], window=cfg.analysis["window"],
                        width=cfg.analysis["width"], delta_c=s["delta_c"])
        run.trace(f"sensing_edge_{mode}", r.edge)
        d = r.to_dict()
        d["samples_mean"] = float(np.mean(r.samples))
        body[mode] = d
    if "free_space" in body and "cavity" in body:
        body["delta_e_ratio"] = body["free_space"]["delta_e"] / body["cavity"]["delta_e"]
    run.report("sensitivity", "sensitivity", body)
    return body


COMMANDS = {
    "simulate-spectrum": (cmd_simulate_spectrum, "coupling-detuning sweep per mode"),
    "sweep-mw": (cmd_sweep_mw, "MW field-amplitude sweep at fixed detunings"),
    "hysteresis": (cmd_hysteresis, "forward and reverse sweeps with jump/loop report"),
    "grid": (cmd_grid, "one sweep per parameter override"),
    "analyze": (cmd_analyze, "critical point (and optional FI) of trace CSV files"),
    "fit-shift": (cmd_fit_shift, "edge shift versus MW field and the eta fit"),
    "fisher-scaling": (cmd_fisher_scaling, "Fisher information versus acquisition time"),
    "calibrate-at": (cmd_calibrate_at, "MW Rabi frequency and field from AT splitting"),
    "sensitivity": (cmd_sensitivity, "field uncertainty and sensitivity at a parked detuning"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydnept", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML config file or preset ({', '.join(PRESETS)})")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--mode", choices=("free_space", "cavity", "both"))
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="trace file format (reports are always JSON)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for grids")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        if name == "sweep-mw":
            p.add_argument("--delta-c", type=float, help="park the coupling detuning (MHz)")
        elif name == "grid":
            p.add_argument("--set", action="append", metavar="KEY=V1,V2",
                           help="override values; repeat for an outer product")
        elif name == "analyze":
            p.add_argument("inputs", nargs="+", help="trace CSV files")
            p.add_argument("--window", type=int)
            p.add_argument("--region", type=float, nargs=2, metavar=("LO", "HI"),
                           help="edge-free x-interval for the noise variance")
        elif name == "fit-shift":
            p.add_argument("--data", help="CSV of (E [mV/cm], shift [MHz]) rows")
        elif name == "calibrate-at":
            p.add_argument("--input", help="AT spectrum trace CSV")
            p.add_argument("--peaks", choices=("max", "min"), default="max",
                           help="peaks are maxima (transmission) or minima (absorption)")
    return parser


def _error_doc(exc: BaseException) -> dict:
    err = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("path", "line", "bracket"):
        if getattr(exc, attr, None) is not None:
            err[attr] = _jsonable(getattr(exc, attr))
    return {"schema_version": SCHEMA_VERSION, "error": err}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output = args.out
        if args.mode is not None:
            cfg.mode = args.mode
        if args.threads < 1:
            raise SchemaError("--threads must be >= 1", "threads")
        run = Run(args.command, cfg, args)
        COMMANDS[args.command][0](cfg, args, run)
        path = run.finish()
        print(path)
        return 0
    except SchemaError as exc:
        print(json.dumps(_error_doc(exc)), file=sys.stderr)
        return EXIT_CONFIG
    except (RydNeptError, ValueError, OSError) as exc:
        print(json.dumps(_error_doc(exc)), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
