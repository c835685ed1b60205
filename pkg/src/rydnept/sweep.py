"""Time-domain sweeps through the critical point, hysteresis pairs and parameter grids.

Hysteresis and edge sharpening come only from integrating the mean-field flow
while the axis is ramped; nothing here selects branches by hand.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dynamics import CavityFlow, FreeSpaceFlow, relax, run_flow
from .exceptions import ParameterError, RydNeptError
from .metrology import rabi_from_field
from .optics import Detector, cavity_buildup
from .params import CavityParams, DetectorModel, LadderParams, MediumParams
from .physics import COEFFS, IM_GE, coefficients, self_consistent_branches
from .trace import AXES, SweepSpec, Trace

log = logging.getLogger(__name__)

MODES = ("free_space", "cavity")
_IDX = {name: k for k, name in enumerate(COEFFS)}


@dataclass(frozen=True)
class Optics:
    """Detection chain for a sweep.

    ``reference`` is the raw intensity that maps to y = 1; when ``None`` the
    maximum of the sweep's own noiseless trace is used.
    """

    mode: str = "free_space"
    medium: MediumParams = field(default_factory=MediumParams)
    cavity: CavityParams = field(default_factory=CavityParams)
    detector: DetectorModel = field(default_factory=DetectorModel)
    reference: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown optics mode {self.mode!r}; expected one of {MODES}")

    def with_mode(self, mode: str) -> "Optics":
        return replace(self, mode=mode)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "medium": self.medium.to_dict(),
                "cavity": self.cavity.to_dict(), "detector": self.detector.to_dict(),
                "reference": self.reference}


def _coefficient_schedule(params: LadderParams, spec: SweepSpec, mw_off: bool = False):
    base = coefficients(params)
    if spec.axis == "coupling_detuning":
        k = _IDX["delta_c"]

        def value(v):
            return v
    else:
        k = _IDX["omega_mw"]

        def value(v):
            return 0.0 if mw_off else rabi_from_field(max(v, 0.0), spec.mu0)

    def coeff_at_value(v):
        c = base.copy()
        c[k] = value(v)
        return c

    def coeff_of_time(t):
        return coeff_at_value(spec.value_at(t))

    return coeff_of_time, coeff_at_value


def _params_at(params: LadderParams, spec: SweepSpec, v: float, mw_off=False) -> LadderParams:
    if spec.axis == "coupling_detuning":
        return params.replace(delta_c=v)
    return params.replace(omega_mw=0.0 if mw_off else rabi_from_field(max(v, 0.0), spec.mu0))


def _make_flow(params: LadderParams, optics: Optics):
    if optics.mode == "free_space":
        return FreeSpaceFlow(optics.medium)
    return CavityFlow(optics.cavity, optics.medium, params.omega_p ** 2)


def relaxed_start(params: LadderParams, optics: Optics, spec: SweepSpec, flow=None,
                  mw_off=False):
    """Relaxed flow state at the sweep's start value (lowest-population seed)."""
    flow = flow or _make_flow(params, optics)
    p0 = _params_at(params, spec, spec.start, mw_off)
    branches = self_consistent_branches(p0)
    x = branches[0].state.vector.copy()
    c0 = coefficients(p0)
    if isinstance(flow, CavityFlow):
        a = max(p0.gamma_e * (-x[IM_GE]) / p0.omega_p, 0.0)
        y0 = flow.initial(x, flow.s_in * cavity_buildup(optics.cavity, a, optics.medium))
    else:
        y0 = flow.initial(x)
    return relax(flow, c0, params.V, y0)


def _window_averages(flow, coeff_of_time, V, y0, spec, rtol, atol):
    n, dt = spec.n_points, spec.t_int
    if spec.stepped:
        avgs = np.empty(n)
        y = y0.copy()
        for i in range(n):
            c = coeff_of_time(i * dt)
            sol = run_flow(flow, lambda t, c=c: c, V, y, (0.0, dt), t_eval=[dt],
                           rtol=rtol, atol=atol)
            y = sol.y[:, -1].copy()
            avgs[i] = y[-1] / dt
            y[-1] = 0.0
        return avgs, y
    bounds = np.arange(n + 1) * dt
    sol = run_flow(flow, coeff_of_time, V, y0, (0.0, bounds[-1]), t_eval=bounds,
                   rtol=rtol, atol=atol)
    q = sol.y[-1]
    y_end = sol.y[:, -1].copy()
    y_end[-1] = 0.0
    return np.diff(q) / dt, y_end


def _sweep(params, optics, spec, y0=None, rtol=1e-6, atol=1e-9, mw_off=False):
    if optics.mode == "cavity" and params.omega_p == 0:
        raw = np.zeros(spec.n_points)
        y_end = None
    else:
        flow = _make_flow(params, optics)
        coeff_of_time, _ = _coefficient_schedule(params, spec, mw_off)
        if y0 is None:
            y0 = relaxed_start(params, optics, spec, flow, mw_off)
        raw, y_end = _window_averages(flow, coeff_of_time, params.V, y0, spec, rtol, atol)
    scale = optics.reference if optics.reference is not None else float(np.max(raw))
    if not scale > 0:
        scale = 1.0
    clean = raw / scale
    det = Detector(optics.detector, stream=spec.seed)
    y = det.detect(clean, spec.t_int, index=0, cavity=optics.mode == "cavity")
    meta = {
        "sweep": spec.to_dict(),
        "mode": optics.mode,
        "params": params.to_dict(),
        "optics": optics.to_dict(),
        "scale": scale,
    }
    if mw_off:
        meta["mw_off"] = True
    _, units = AXES[spec.axis]
    return Trace(spec.positions(), y, axis=spec.axis, units=units, meta=meta), y_end


def sweep(params: LadderParams, optics: Optics, spec: SweepSpec, **kw) -> Trace:
    return _sweep(params, optics, spec, **kw)[0]


def sweep_detuning(params: LadderParams, optics: Optics, spec: SweepSpec, **kw) -> Trace:
    """Ramp the coupling detuning linearly and record window-averaged intensity."""
    if spec.axis != "coupling_detuning":
        raise ParameterError("sweep_detuning needs a coupling_detuning sweep")
    return _sweep(params, optics, spec, **kw)[0]


def sweep_mw_amplitude(params: LadderParams, optics: Optics, spec: SweepSpec,
                       mw_off: bool = False, **kw) -> Trace:
    """Ramp the MW field amplitude (mV/cm); ``mw_off`` decouples the MW from the atoms."""
    if spec.axis != "mw_amplitude":
        raise ParameterError("sweep_mw_amplitude needs an mw_amplitude sweep")
    return _sweep(params, optics, spec, mw_off=mw_off, **kw)[0]


def hysteresis_pair(params: LadderParams, optics: Optics, spec: SweepSpec, **kw):
    """Forward sweep, then the reverse sweep seeded by the relaxed forward end-state."""
    up, y_end = _sweep(params, optics, spec, **kw)
    rev = spec.reversed(seed=spec.seed + 1)
    y0 = None
    if y_end is not None:
        flow = _make_flow(params, optics)
        _, coeff_at_value = _coefficient_schedule(params, rev, kw.get("mw_off", False))
        y0 = relax(flow, coeff_at_value(rev.start), params.V, y_end)
    down, _ = _sweep(params, optics, rev, y0=y0, **kw)
    return up, down


def jump_position(trace: Trace) -> float:
    """Position of the largest single-step change of y (midpoint of that step)."""
    i = int(np.argmax(np.abs(np.diff(trace.y))))
    return 0.5 * (trace.x[i] + trace.x[i + 1])


def loop_area(up: Trace, down: Trace) -> float:
    """Area enclosed between forward and reverse traces on their common grid."""
    a, b = up.sorted(), down.sorted()
    yb = np.interp(a.x, b.x, b.y)
    return float(np.trapezoid(np.abs(a.y - yb), a.x))


@dataclass
class GridResult:
    traces: list
    errors: dict  # grid index -> error message


def cell_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _apply_override(params, optics, spec, override):
    p_kw, s_kw, o_kw = {}, {}, {}
    pnames = set(params.to_dict())
    snames = set(spec.to_dict())
    for key, val in override.items():
        if key in pnames:
            p_kw[key] = val
        elif key in snames:
            s_kw[key] = val
        elif key in ("mode", "reference"):
            o_kw[key] = val
        else:
            raise ParameterError(f"unknown override key {key!r}")
    if "start" in s_kw or "stop" in s_kw:
        s_kw.setdefault("direction", None)
    return (params.replace(**p_kw), replace(optics, **o_kw),
            SweepSpec(**{**spec.to_dict(), **s_kw}))


def run_grid(params: LadderParams, optics: Optics, spec: SweepSpec, overrides: list,
             master_seed: int = 0, threads: int = 1, mw_off: bool = False) -> GridResult:
    """Run one sweep per override dict; results keep input order.

    Overrides may name any LadderParams or SweepSpec field, plus ``mode`` or
    ``reference``.  Cell ``i`` is seeded by ``(master_seed, i)``; failures are
    collected per cell.
    """
    def run(i):
        try:
            p, o, s = _apply_override(params, optics, spec, overrides[i])
            s = replace(s, seed=cell_seed(master_seed, i))
            return _sweep(p, o, s, mw_off=mw_off)[0], None
        except (RydNeptError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    idx = range(len(overrides))
    if threads > 1 and len(overrides) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, idx))
    else:
        results = [run(i) for i in idx]
    errors = {i: e for i, (_, e) in enumerate(results) if e is not None}
    for i, e in errors.items():
        log.warning("grid cell %d failed: %s", i, e)
    return GridResult(traces=[t for t, _ in results], errors=errors)
