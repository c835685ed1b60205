"""Run configuration: a single YAML dialect with schema validation and defaults.

Units: every frequency and rate in MHz (Omega/2pi convention), times in us,
fields in mV/cm, optical depth dimensionless.  Unknown keys are rejected with
their dotted path and source line.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

import yaml

from .exceptions import ParameterError, SchemaError
from .optics import calibrate_cavity
from .params import CavityParams, DetectorModel, LadderParams, MediumParams
from .sweep import MODES, Optics
from .trace import SweepSpec

PRESETS = ("bistable-demo", "bistable-demo-cavity", "sensing-demo")
RUN_MODES = MODES + ("both",)

# free-form workflow sections: key -> default
SECTION_DEFAULTS = {
    "analysis": {"window": 5, "noise_region": None, "k_floor": 0.0, "width": "sigma"},
    "fisher": {"total_times": [18.0, 57.0, 180.0, 570.0, 1800.0], "n_points": 1000,
               "t0": 1800.0},
    "shift": {"fields": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 15.2], "total_time": 1800.0,
              "n_points": 1000},
    "sensing": {"park_range": None, "n_samples": 200, "delta_c": None},
    "grid": {"overrides": []},
    "at": {"omega_p": 0.5, "omega_c": 5.0, "start": -40.0, "stop": 40.0, "n_points": 1601},
}

_DATACLASS_SECTIONS = {
    "physics": LadderParams,
    "medium": MediumParams,
    "cavity": CavityParams,
    "detector": DetectorModel,
    "sweep": SweepSpec,
}
_EXTRA_KEYS = {
    "cavity": ("finesse_empty", "finesse_loaded"),
    "sweep": ("total_time", "n_points"),
}

DEFAULT_SWEEP = SweepSpec(axis="coupling_detuning", start=-30.0, stop=30.0, rate=0.1, t_int=0.6)


@dataclass
class RunConfig:
    physics: LadderParams = field(default_factory=LadderParams)
    medium: MediumParams = field(default_factory=MediumParams)
    cavity: CavityParams = field(default_factory=CavityParams)
    detector: DetectorModel = field(default_factory=DetectorModel)
    sweep: SweepSpec = DEFAULT_SWEEP
    mode: str = "free_space"
    seed: int = 0
    output: str = "out"
    analysis: dict = field(default_factory=lambda: copy.deepcopy(SECTION_DEFAULTS["analysis"]))
    fisher: dict = field(default_factory=lambda: copy.deepcopy(SECTION_DEFAULTS["fisher"]))
    shift: dict = field(default_factory=lambda: copy.deepcopy(SECTION_DEFAULTS["shift"]))
    sensing: dict = field(default_factory=lambda: copy.deepcopy(SECTION_DEFAULTS["sensing"]))
    grid: dict = field(default_factory=lambda: copy.deepcopy(SECTION_DEFAULTS["grid"]))
    at: dict = field(default_factory=lambda: copy.deepcopy(SECTION_DEFAULTS["at"]))

    def optics(self, mode: str | None = None) -> Optics:
        m = mode or (self.mode if self.mode != "both" else "free_space")
        return Optics(mode=m, medium=self.medium, cavity=self.cavity, detector=self.detector)

    @property
    def modes(self) -> tuple:
        return MODES if self.mode == "both" else (self.mode,)

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "seed": self.seed, "output": self.output}
        for name in _DATACLASS_SECTIONS:
            d[name] = asdict(getattr(self, name))
        for name in SECTION_DEFAULTS:
            d[name] = copy.deepcopy(getattr(self, name))
        return d

    def with_changes(self, **changes) -> "RunConfig":
        new = copy.copy(self)
        for k, v in changes.items():
            setattr(new, k, v)
        return new

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# --- YAML with line tracking ---------------------------------------------------

def _key_lines(node, prefix="", out=None):
    """Map dotted key paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _key_lines(v, path, out)
    return out


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_type(value, default, path, lines):
    """Coerce ``value`` to the type implied by ``default``."""
    line = lines.get(path)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise SchemaError(f"expected true/false, got {value!r}", path, line)
        return value
    if isinstance(default, int):
        if not (isinstance(value, int) and not isinstance(value, bool)):
            raise SchemaError(f"expected an integer, got {value!r}", path, line)
        return value
    if isinstance(default, float):
        if not _is_number(value):
            raise SchemaError(f"expected a number, got {value!r}", path, line)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise SchemaError(f"expected a string, got {value!r}", path, line)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise SchemaError(f"expected a list, got {value!r}", path, line)
        return value
    return value


def _section_from_dataclass(cls, data, path, lines):
    allowed = {f.name: f for f in fields(cls)}
    extra = _EXTRA_KEYS.get(path, ())
    if not isinstance(data, dict):
        raise SchemaError(f"expected a mapping, got {type(data).__name__}", path, lines.get(path))
    kw, ext = {}, {}
    for key, value in data.items():
        kpath = f"{path}.{key}"
        if key in allowed:
            default = getattr(cls(), key)
            if value is None and key == "direction":
                kw[key] = None
                continue
            if default is None and _is_number(value):
                kw[key] = value
                continue
            kw[key] = _check_type(value, default, kpath, lines)
        elif key in extra:
            if not _is_number(value):
                raise SchemaError(f"expected a number, got {value!r}", kpath, lines.get(kpath))
            ext[key] = value
        else:
            raise SchemaError(f"unknown key {key!r}", kpath, lines.get(kpath))
    return kw, ext


def _build_cavity(cur, kw, ext, lines):
    if not ext:
        return CavityParams(**{**cur, **kw})
    if set(ext) != {"finesse_empty", "finesse_loaded"}:
        raise SchemaError("finesse_empty and finesse_loaded must be given together",
                          "cavity", lines.get("cavity"))
    for k in ("loss_empty", "loss_cell"):
        if k in kw:
            raise SchemaError(f"{k} conflicts with a finesse calibration", f"cavity.{k}",
                              lines.get(f"cavity.{k}"))
    rest = {k: v for k, v in {**cur, **kw}.items() if k not in ("loss_empty", "loss_cell")}
    t_in = rest.pop("t_in")
    return calibrate_cavity(ext["finesse_empty"], ext["finesse_loaded"], t_in=t_in, **rest)


def _build_sweep(cur, kw, ext, lines):
    base = {**cur, **kw}
    if ("start" in kw or "stop" in kw) and "direction" not in kw:
        base["direction"] = None
    if not ext:
        return SweepSpec(**base)
    if set(ext) != {"total_time", "n_points"}:
        raise SchemaError("total_time and n_points must be given together", "sweep",
                          lines.get("sweep"))
    if "rate" in kw or "t_int" in kw:
        raise SchemaError("give either rate/t_int or total_time/n_points", "sweep",
                          lines.get("sweep"))
    for k in ("rate", "t_int"):
        base.pop(k)
    axis, start, stop = base.pop("axis"), base.pop("start"), base.pop("stop")
    return SweepSpec.from_total_time(axis, start, stop, float(ext["total_time"]),
                                     int(ext["n_points"]), **base)


def config_from_mapping(data: dict | None, lines: dict | None = None,
                        base: RunConfig | None = None) -> RunConfig:
    """Validate a parsed mapping; sections not given keep the values of ``base``."""
    data = {} if data is None else data
    lines = lines or {}
    if not isinstance(data, dict):
        raise SchemaError("top level must be a mapping", None, 1)
    data = dict(data)
    if "preset" in data:
        name = data.pop("preset")
        if base is not None:
            raise SchemaError("nested presets are not supported", "preset", lines.get("preset"))
        base = load_preset(name)
    cfg = copy.deepcopy(base) if base is not None else RunConfig()
    for key, value in data.items():
        path = key
        line = lines.get(path)
        if key in _DATACLASS_SECTIONS:
            if value is None:
                continue
            kw, ext = _section_from_dataclass(_DATACLASS_SECTIONS[key], value, key, lines)
            cur = asdict(getattr(cfg, key))
            try:
                if key == "cavity":
                    obj = _build_cavity(cur, kw, ext, lines)
                elif key == "sweep":
                    obj = _build_sweep(cur, kw, ext, lines)
                else:
                    obj = _DATACLASS_SECTIONS[key](**{**cur, **kw})
            except ParameterError as exc:
                raise SchemaError(str(exc), key, line) from None
            setattr(cfg, key, obj)
        elif key in SECTION_DEFAULTS:
            if value is None:
                continue
            if not isinstance(value, dict):
                raise SchemaError("expected a mapping", key, line)
            sect = copy.deepcopy(getattr(cfg, key))
            for k, v in value.items():
                kpath = f"{key}.{k}"
                if k not in SECTION_DEFAULTS[key]:
                    raise SchemaError(f"unknown key {k!r}", kpath, lines.get(kpath))
                d = SECTION_DEFAULTS[key][k]
                sect[k] = v if d is None or v is None else _check_type(v, d, kpath, lines)
            setattr(cfg, key, sect)
        elif key == "mode":
            if value not in RUN_MODES:
                raise SchemaError(f"mode must be one of {RUN_MODES}, got {value!r}", key, line)
            cfg.mode = value
        elif key == "seed":
            cfg.seed = _check_type(value, 0, key, lines)
        elif key == "output":
            cfg.output = _check_type(value, "", key, lines)
        else:
            raise SchemaError(f"unknown key {key!r}", path, line)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse YAML text into a validated RunConfig; an empty document gives all defaults."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SchemaError(f"invalid YAML: {getattr(exc, 'problem', exc)}", None,
                          mark.line + 1 if mark else None) from None
    lines = _key_lines(node) if node is not None else {}
    return config_from_mapping(data, lines)


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def load_config(path_or_preset: str | None) -> RunConfig:
    if path_or_preset is None:
        return RunConfig()
    if path_or_preset in PRESETS:
        return load_preset(path_or_preset)
    with open(path_or_preset, encoding="utf-8") as fh:
        return parse_config(fh.read())


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise SchemaError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}", "preset")
    text = resources.files("rydnept.presets").joinpath(f"{name}.yaml").read_text("utf-8")
    return parse_config(text)


def preset_text(name: str) -> str:
    return resources.files("rydnept.presets").joinpath(f"{name}.yaml").read_text("utf-8")

