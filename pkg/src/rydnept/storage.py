"""Trace CSV files, JSON reports and run manifests.

Trace CSV layout::

    # axis=coupling_detuning
    # units=MHz
    # meta={"mode": "cavity", ...}
    x,y
    -110,0.46...

Numbers are written with 17 significant digits so doubles survive exactly.
"""
from __future__ import annotations

import datetime as _dt
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .exceptions import FormatError
from .trace import AXES, Trace

SCHEMA_VERSION = "1.0"
MANIFEST_NAME = "manifest.json"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def trace_to_csv(trace: Trace) -> str:
    lines = [f"# axis={trace.axis}", f"# units={trace.units}",
             "# meta=" + json.dumps(_jsonable(trace.meta), sort_keys=True), "x,y"]
    lines += [f"{_fmt(x)},{_fmt(y)}" for x, y in zip(trace.x, trace.y)]
    return "\n".join(lines) + "\n"


def write_trace(path, trace: Trace) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(trace_to_csv(trace))
    return str(path)


def parse_trace(text: str) -> Trace:
    header, xs, ys = {}, [], []
    seen_columns = False
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if seen_columns:
                raise FormatError("metadata line after the data block", n)
            body = line[1:].strip()
            if "=" not in body:
                raise FormatError(f"header line is not key=value: {raw!r}", n)
            key, value = body.split("=", 1)
            header[key.strip()] = (value.strip(), n)
            continue
        if not seen_columns:
            if line.replace(" ", "") != "x,y":
                raise FormatError(f"expected column header 'x,y', got {raw!r}", n)
            if not header:
                raise FormatError("missing metadata header", n)
            seen_columns = True
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise FormatError(f"expected two columns, got {len(parts)}", n)
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
        except ValueError:
            raise FormatError(f"non-numeric value in {raw!r}", n) from None
    if not header:
        raise FormatError("missing metadata header", 1)
    if not seen_columns:
        raise FormatError("missing 'x,y' column header", None)
    if "axis" not in header:
        raise FormatError("metadata header lacks 'axis'", 1)
    axis = header["axis"][0]
    if axis not in AXES:
        raise FormatError(f"unknown axis {axis!r}", header["axis"][1])
    units = header.get("units", (AXES[axis][1], None))[0]
    meta = {}
    if "meta" in header:
        try:
            meta = json.loads(header["meta"][0])
        except json.JSONDecodeError as exc:
            raise FormatError(f"metadata is not valid JSON: {exc.msg}", header["meta"][1]) \
                from None
    try:
        return Trace(np.array(xs), np.array(ys), axis=axis, units=units, meta=meta)
    except ValueError as exc:
        raise FormatError(str(exc), None) from None


def read_trace(path) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())


def read_columns(path, n: int = 2) -> np.ndarray:
    """Plain numeric CSV (optional header line, '#' comments) as an (N, n) array."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for k, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                if not rows:
                    continue  # column header
                raise FormatError(f"non-numeric value in {raw.rstrip()!r}", k) from None
            if len(vals) != n:
                raise FormatError(f"expected {n} columns, got {len(vals)}", k)
            rows.append(vals)
    return np.array(rows, dtype=float).reshape(-1, n)


def report_json(kind: str, body: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, **_jsonable(body)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_report(path, kind: str, body: dict) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_json(kind, body))
    return str(path)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seeds: dict
    files: list = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str | None = None
    wall_clock_s: float | None = None
    tool_version: str = __version__
    schema_version: str = SCHEMA_VERSION

    def add(self, path) -> None:
        name = os.path.basename(str(path))
        if name in self.files:
            raise ValueError(f"{name} already listed in the manifest")
        self.files.append(name)

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, outdir) -> str:
        path = os.path.join(outdir, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


MANIFEST_KEYS = {f for f in RunManifest.__dataclass_fields__}


def validate_manifest(doc: dict) -> None:
    """Raise FormatError unless ``doc`` has exactly the manifest fields with sane types."""
    keys = set(doc)
    if keys != MANIFEST_KEYS:
        raise FormatError(f"manifest keys differ: missing {sorted(MANIFEST_KEYS - keys)}, "
                          f"unexpected {sorted(keys - MANIFEST_KEYS)}")
    if not (isinstance(doc["files"], list) and all(isinstance(f, str) for f in doc["files"])):
        raise FormatError("manifest 'files' must be a list of names")
    if len(set(doc["files"])) != len(doc["files"]):
        raise FormatError("manifest lists a file twice")
    if not isinstance(doc["config_hash"], str) or len(doc["config_hash"]) != 64:
        raise FormatError("manifest 'config_hash' must be a sha256 hex digest")
