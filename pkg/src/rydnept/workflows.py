"""Multi-step workflows built from sweeps and the estimation chain.

Each function corresponds to one end-to-end measurement: FI versus acquisition
time, the MW-induced edge shift and its eta fit, an AT calibration spectrum,
and the parked-detuning field-sensitivity run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .metrology import (
    CriticalPoint,
    FisherResult,
    PowerLawFit,
    SensitivityReport,
    ShiftResult,
    fisher,
    fit_eta,
    fit_power_law,
    max_slope,
    noise_variance,
    rabi_from_field,
    sensitivity_report,
    shift_between_traces,
)
from .optics import Detector, cavity_self_consistent, free_space_transmission
from .params import DetectorModel, LadderParams
from .physics import (
    build_generator,
    coefficients,
    linear_steady_state,
    self_consistent_branches,
)
from .sweep import Optics, _make_flow, relaxed_start, sweep
from .trace import SweepSpec, Trace


# --- adiabatic spectra --------------------------------------------------------

def steady_spectrum(params: LadderParams, optics: Optics, deltas, branch: str = "lowest"):
    """Static transmission versus coupling detuning on one branch.

    Free space uses exp(-od0 a); cavity mode reports t_out * s / s_in at the
    joint atom-cavity fixed point.  No normalization is applied.
    """
    pick = 0 if branch == "lowest" else -1
    out = np.empty(len(deltas))
    for i, dc in enumerate(deltas):
        p = params.replace(delta_c=float(dc))
        if optics.mode == "free_space":
            b = self_consistent_branches(p)[pick]
            a = p.gamma_e * b.state.rho_eg.imag / p.omega_p
            out[i] = free_space_transmission(a, optics.medium)
        else:
            s_in = p.omega_p ** 2
            fps = cavity_self_consistent(p, optics.cavity, optics.medium, s_in)
            out[i] = optics.cavity.t_out * fps[pick].s / s_in
    return out


def at_spectrum(params: LadderParams, od0: float, deltas) -> np.ndarray:
    """Weak-probe transmission versus coupling detuning without interaction feedback."""
    out = np.empty(len(deltas))
    for i, dc in enumerate(deltas):
        p = params.replace(delta_c=float(dc))
        st = linear_steady_state(build_generator(p))
        out[i] = math.exp(-od0 * p.gamma_e * st.rho_eg.imag / p.omega_p)
    return out


# --- Fisher information versus acquisition time ---------------------------------

@dataclass
class FisherScaling:
    total_times: list
    results: list  # FisherResult per total time
    critical: list  # CriticalPoint per total time
    fit: PowerLawFit
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "points": [
                {"t": t, "t_int": r.t_int, "k": r.k, "var": r.var_mu, "F": r.F, "x_c": c.x_c}
                for t, r, c in zip(self.total_times, self.results, self.critical)
            ],
            "fit": {"A": self.fit.A, "lambda": self.fit.lam, "t0": self.fit.t0,
                    "rms": self.fit.rms},
        }


def fisher_scaling(params: LadderParams, optics: Optics, start: float, stop: float,
                   total_times, n_points: int, t0: float, noise_region,
                   window: int = 5, seed: int = 0) -> FisherScaling:
    """F = k^2 / Var(mu) for detuning sweeps of different total duration.

    The acquisition time ``t`` is the total sweep duration; every sweep records
    ``n_points`` windows so t_int scales with ``t``.  ``noise_region`` must lie
    away from the edge.
    """
    results, cps, traces = [], [], []
    for i, T in enumerate(total_times):
        spec = SweepSpec.from_total_time("coupling_detuning", start, stop, T, n_points,
                                         seed=seed + i)
        tr = sweep(params, optics, spec)
        cp = max_slope(tr, window)
        var = noise_variance(tr, noise_region)
        results.append(fisher(cp.k, var, t_int=spec.t_int))
        cps.append(cp)
        traces.append(tr)
    fit = fit_power_law([(t, r.F) for t, r in zip(total_times, results)], t0)
    return FisherScaling(list(total_times), results, cps, fit, traces)


# --- MW-induced edge shift ------------------------------------------------------

@dataclass
class ShiftFamily:
    fields: list
    shifts: list  # MHz, relative to the first field
    methods: list
    eta: float
    eta_ci: tuple
    rms: float
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"fields": self.fields, "shifts": self.shifts, "methods": self.methods,
                "eta": self.eta, "eta_ci": list(self.eta_ci), "rms": self.rms}


def shift_family(params: LadderParams, optics: Optics, fields, start: float, stop: float,
                 total_time: float, n_points: int, window: int = 5, seed: int = 0,
                 mu0: float = 2938.0) -> ShiftFamily:
    """Detuning sweeps at several MW fields; edge shifts relative to ``fields[0]``, then eta."""
    traces = []
    for i, E in enumerate(fields):
        p = params.replace(omega_mw=rabi_from_field(E, mu0))
        spec = SweepSpec.from_total_time("coupling_detuning", start, stop, total_time,
                                         n_points, seed=seed + i)
        traces.append(sweep(p, optics, spec))
    res = [shift_between_traces(traces[0], t, window) for t in traces]
    shifts = [r.delta for r in res]
    fit = fit_eta(list(zip(fields, shifts)), params.delta_mw, mu0)
    return ShiftFamily(list(fields), shifts, [r.method for r in res], fit.eta, fit.ci,
                       fit.rms, traces)


# --- parked-detuning field sensing ------------------------------------------------

@dataclass
class SensingRun:
    mode: str
    delta_c: float  # parked coupling detuning, MHz
    edge: Trace  # noiseless MW-amplitude scan
    samples: np.ndarray
    report: SensitivityReport

    def to_dict(self) -> dict:
        d = self.report.to_dict()
        d.update(mode=self.mode, delta_c=self.delta_c, n_samples=int(len(self.samples)))
        return d


def _relaxed_level(params: LadderParams, optics: Optics, delta_c: float) -> float:
    """Detected raw intensity after relaxing from the sweep start state at ``delta_c``."""
    p = params.replace(delta_c=delta_c)
    spec = SweepSpec("coupling_detuning", delta_c, delta_c + 1.0, rate=1.0, t_int=0.5)
    flow = _make_flow(p, optics)
    y = relaxed_start(p, optics, spec, flow)
    return float(flow.intensity(coefficients(p), y))


def park_detuning(params: LadderParams, optics: Optics, E: float, start: float, stop: float,
                  total_time: float = 1800.0, n_points: int = 1000, window: int = 5,
                  mu0: float = 2938.0, half_width: float = 1.0, tol: float = 1e-4) -> float:
    """Coupling detuning of the edge with the MW field held at ``E``.

    A slow noiseless scan locates the edge to within a grid step; bisection on
    the relaxed intensity then pins the switching point (the fold, when the
    edge is bistable) to ``tol``.
    """
    quiet = replace(optics, detector=replace(optics.detector, sigma0=0.0))
    p = params.replace(omega_mw=rabi_from_field(E, mu0))
    spec = SweepSpec.from_total_time("coupling_detuning", start, stop, total_time, n_points)
    cp = max_slope(sweep(p, quiet, spec), window)
    lo, hi = cp.x_c - half_width, cp.x_c + half_width
    I_lo, I_hi = _relaxed_level(p, quiet, lo), _relaxed_level(p, quiet, hi)
    thr = 0.5 * (I_lo + I_hi)
    below = I_lo < thr
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (_relaxed_level(p, quiet, mid) < thr) == below:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sensing_run(params: LadderParams, optics: Optics, mw_spec: SweepSpec,
                park_range: tuple, n_samples: int = 200, window: int = 5,
                width: str = "sigma", delta_c: float | None = None) -> SensingRun:
    """Field uncertainty and sensitivity at a parked coupling detuning.

    The coupling detuning is parked at the edge found at the centre of the MW
    scan (unless ``delta_c`` is given).  The MW scan is recorded without
    detector noise and normalized to the same scan with the MW decoupled; the
    ``n_samples`` repeated readings at the edge's critical field carry the
    detector noise for the scan's ``t_int``.
    """
    E_mid = 0.5 * (mw_spec.start + mw_spec.stop)
    if delta_c is None:
        delta_c = park_detuning(params, optics, E_mid, *park_range, mu0=mw_spec.mu0)
    p = params.replace(delta_c=float(delta_c))
    quiet = replace(optics, detector=replace(optics.detector, sigma0=0.0))
    ref = sweep(p, quiet, mw_spec, mw_off=True)
    scale = ref.meta["scale"]
    edge = sweep(p, replace(quiet, reference=scale), mw_spec)
    cp = max_slope(edge, window)
    xs = edge.sorted()
    y_c = float(np.interp(cp.x_c, xs.x, xs.y))
    det = Detector(optics.detector, stream=mw_spec.seed + 1)
    samples = np.array([det.detect(y_c, mw_spec.t_int, index=i,
                                   cavity=optics.mode == "cavity")
                        for i in range(n_samples)])
    report = sensitivity_report(edge, samples, mw_spec.t_int, window=window, width=width)
    return SensingRun(optics.mode, float(delta_c), edge, samples, report)
