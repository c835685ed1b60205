"""Atomic state to detected intensity: single-pass transmission, resonant cavity
buildup with absorption feedback, and the detector noise model."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import NoConvergence, Overcoupled, ParameterError, ZeroProbe
from .params import CavityParams, DetectorModel, LadderParams, MediumParams
from .physics import (
    IM_GE,
    R1,
    SteadyBranch,
    _batched_steady,
    classify_stability,
    coefficients,
    DensityMatrix4,
    MarginalStability,
)

log = logging.getLogger(__name__)

ABSORPTION_CLAMP = 1e-6


def normalized_absorption(state: DensityMatrix4, omega_p: float, gamma_e: float) -> float:
    """gamma_e * Im(rho_eg) / omega_p; equals 1 for a weak resonant two-level probe."""
    if omega_p == 0:
        raise ZeroProbe("absorption is undefined for a zero probe Rabi frequency")
    a = gamma_e * state.rho_eg.imag / omega_p
    lo, hi = -ABSORPTION_CLAMP, 1.0 + ABSORPTION_CLAMP
    if a < lo or a > hi:
        log.warning("normalized absorption %.6g outside [0, 1]; clamped", a)
        a = min(max(a, lo), hi)
    return a


def free_space_transmission(a: float, medium: MediumParams):
    """Beer-Lambert transmission exp(-od0 * a)."""
    return np.exp(-medium.od0 * np.asarray(a, dtype=float)) if np.ndim(a) else \
        math.exp(-medium.od0 * a)


def round_trip_amplitude(cavity: CavityParams, a: float = 0.0, od0: float = 0.0,
                         include_cell: bool = True):
    g = (1.0 - cavity.t_in) * (1.0 - cavity.loss_empty)
    if include_cell:
        g *= 1.0 - cavity.loss_cell
    return np.sqrt(g * np.exp(-od0 * np.asarray(a, dtype=float)))


def finesse_from_amplitude(r):
    return math.pi * math.sqrt(r) / (1.0 - r)


def amplitude_from_finesse(finesse: float) -> float:
    """Invert F = pi sqrt(r) / (1 - r) for the round-trip amplitude r in (0, 1)."""
    if finesse <= 0:
        raise ParameterError(f"finesse must be positive, got {finesse!r}")
    # pi sqrt(r) = F (1 - r) is a quadratic in u = sqrt(r)
    u = (-math.pi + math.sqrt(math.pi ** 2 + 4 * finesse ** 2)) / (2 * finesse)
    return u * u


def empty_finesse(cavity: CavityParams) -> float:
    return finesse_from_amplitude(float(round_trip_amplitude(cavity, include_cell=False)))


def loaded_finesse(cavity: CavityParams, a: float = 0.0, od0: float = 0.0) -> float:
    return finesse_from_amplitude(float(round_trip_amplitude(cavity, a, od0)))


def calibrate_cavity(empty: float = 85.0, loaded: float = 20.0, t_in: float = 0.06,
                     **kwargs) -> CavityParams:
    """Loss budget reproducing the given empty and loaded (a = 0) finesse values."""
    r_empty = amplitude_from_finesse(empty)
    r_loaded = amplitude_from_finesse(loaded)
    if r_loaded > r_empty:
        raise ParameterError("loaded finesse must not exceed the empty finesse")
    loss_empty = 1.0 - r_empty ** 2 / (1.0 - t_in)
    if not 0.0 <= loss_empty < 1.0:
        raise ParameterError(f"t_in={t_in} is incompatible with empty finesse {empty}")
    loss_cell = 1.0 - (r_loaded / r_empty) ** 2
    return CavityParams(t_in=t_in, loss_empty=loss_empty, loss_cell=loss_cell, **kwargs)


def cavity_buildup(cavity: CavityParams, a, medium: MediumParams):
    """Resonant circulating-to-input intensity ratio t_in / (1 - r_rt)^2."""
    if not cavity.on_resonance:
        raise ParameterError("only a resonantly locked cavity is modelled")
    r = round_trip_amplitude(cavity, a, medium.od0)
    if np.any(r >= 1.0):
        raise Overcoupled(f"round-trip amplitude {np.max(r):.6g} >= 1")
    B = cavity.t_in / (1.0 - r) ** 2
    return float(B) if np.ndim(B) == 0 else B


def max_buildup(cavity: CavityParams) -> float:
    return cavity_buildup(cavity, 0.0, MediumParams(od0=0.0))


@dataclass(frozen=True)
class CavityFixedPoint:
    s: float  # circulating intensity, Rabi-squared units (MHz^2)
    branch: SteadyBranch

    @property
    def omega_p(self) -> float:
        return math.sqrt(self.s)


def _absorption_from_x(x, omega_p, gamma_e):
    return gamma_e * (-x[..., IM_GE]) / omega_p


def _rho_r1(params: LadderParams, s: float, ws) -> np.ndarray:
    """Steady states at circulating intensity ``s`` for each shift population."""
    p = params.replace(omega_p=math.sqrt(s))
    return _batched_steady(coefficients(p), p.V, np.atleast_1d(np.asarray(ws, dtype=float)))


def cavity_self_consistent(params: LadderParams, cavity: CavityParams, medium: MediumParams,
                           s_in: float, n_s: int = 400, w_step: float = 1e-3,
                           tol: float = 1e-8) -> list:
    """Joint fixed points of circulating intensity and Rydberg population.

    Each returned :class:`CavityFixedPoint` satisfies both
    ``s = B(a(rho)) * s_in`` and ``w = rho_r1r1`` to ``tol``.

    The solution set of ``rho_r1r1(s, w) = w`` is followed as a curve
    parametrized by w: at fixed w the Rydberg population grows with probe
    intensity, so s(w) is unique on [s_in * B_min, s_in * B_max] wherever it
    exists.  Folds in s are then regular points, and the cavity condition
    becomes a scalar root search in w (dense scan plus brentq).
    """
    if s_in < 0:
        raise ParameterError(f"s_in must be >= 0, got {s_in!r}")
    if s_in == 0:
        p = params.replace(omega_p=0.0)
        x = _batched_steady(coefficients(p), p.V, np.array([0.0]))[0]
        st = DensityMatrix4(x)
        return [CavityFixedPoint(0.0, SteadyBranch(w=float(x[R1]), state=st, stable=True,
                                                   residual=0.0))]
    b_max = cavity_buildup(cavity, 0.0, medium)
    if medium.od0 == 0:
        return _fixed_points_at(params, cavity, medium, s_in, s_in * b_max, w_step, tol)
    b_min = cavity_buildup(cavity, 1.0 + ABSORPTION_CLAMP, medium)
    s_lo, s_hi = s_in * min(b_min, cavity.t_in), s_in * b_max
    s_grid = np.geomspace(s_lo, s_hi, n_s)
    ws = np.linspace(0.0, 1.0, int(round(1.0 / w_step)) + 1)
    R = np.array([_rho_r1(params, s, ws)[:, R1] for s in s_grid]) - ws  # (n_s, n_w)

    def s_of_w(w):
        def f(s):
            return _rho_r1(params, s, w)[0, R1] - w
        f_lo, f_hi = f(s_lo), f(s_hi)
        if f_lo > 0 or f_hi < 0:
            return None
        if f_lo == 0:
            return s_lo
        if f_hi == 0:
            return s_hi
        return brentq(f, s_lo, s_hi, xtol=1e-14 * s_hi, rtol=4 * np.finfo(float).eps,
                      maxiter=200)

    def H(w):
        s = s_of_w(w)
        if s is None:
            return None, None
        x = _rho_r1(params, s, w)[0]
        a = min(max(_absorption_from_x(x, math.sqrt(s), params.gamma_e), 0.0),
                1.0 + ABSORPTION_CLAMP)
        return s_in * cavity_buildup(cavity, a, medium) - s, s

    # coarse s(w) from the scan (R increases along s), exact H only near sign changes
    hv = np.full(len(ws), np.nan)
    for j in np.flatnonzero((R[0] <= 0) & (R[-1] >= 0)):
        i = min(int(np.searchsorted(R[:, j], 0.0)), n_s - 1)
        if i == 0:
            s_est = s_grid[0]
        else:
            r0, r1 = R[i - 1, j], R[i, j]
            s_est = s_grid[i - 1] + (s_grid[i] - s_grid[i - 1]) * (-r0) / (r1 - r0)
        x = _rho_r1(params, s_est, ws[j])[0]
        a = min(max(_absorption_from_x(x, math.sqrt(s_est), params.gamma_e), 0.0),
                1.0 + ABSORPTION_CLAMP)
        hv[j] = s_in * cavity_buildup(cavity, a, medium) - s_est

    found = []
    for j in range(len(ws) - 1):
        if not (np.isfinite(hv[j]) and np.isfinite(hv[j + 1])):
            continue
        if np.sign(hv[j]) == np.sign(hv[j + 1]) and hv[j] != 0.0:
            continue
        h0, h1 = H(ws[j])[0], H(ws[j + 1])[0]
        if h0 is None or h1 is None:
            continue
        if h0 == 0.0:
            found.append(ws[j])
        elif h1 != 0.0 and np.sign(h0) != np.sign(h1):
            found.append(brentq(lambda w: H(w)[0], ws[j], ws[j + 1], xtol=1e-15,
                                rtol=4 * np.finfo(float).eps, maxiter=200))
    if np.isfinite(hv[-1]) and H(ws[-1])[0] == 0.0:
        found.append(ws[-1])
    return [_make_fixed_point(params, cavity, medium, s_in, H(w)[1], w, tol) for w in found]


def _fixed_points_at(params, cavity, medium, s_in, s, w_step, tol):
    """Feedback-free case: all w-branches at one circulating intensity."""
    ws = np.linspace(0.0, 1.0, int(round(1.0 / w_step)) + 1)
    vals = _rho_r1(params, s, ws)[:, R1] - ws

    def g(w):
        return _rho_r1(params, s, w)[0, R1] - w

    roots = []
    for i in range(len(ws)):
        if vals[i] == 0.0:
            roots.append(ws[i])
        elif i + 1 < len(ws) and vals[i + 1] != 0.0 and np.sign(vals[i]) != np.sign(vals[i + 1]):
            roots.append(brentq(g, ws[i], ws[i + 1], xtol=1e-15, maxiter=200))
    return [_make_fixed_point(params, cavity, medium, s_in, s, w, tol) for w in roots]


def _make_fixed_point(params, cavity, medium, s_in, s, w, tol) -> CavityFixedPoint:
    x = _rho_r1(params, s, w)[0]
    st = DensityMatrix4(x)
    res_w = abs(x[R1] - w)
    a = min(max(_absorption_from_x(x, math.sqrt(s), params.gamma_e), 0.0),
            1.0 + ABSORPTION_CLAMP)
    res_s = abs(s_in * cavity_buildup(cavity, a, medium) - s) / max(s, 1.0)
    if res_w > tol or res_s > tol:
        raise NoConvergence(f"cavity fixed point residuals w={res_w:.2e}, s={res_s:.2e}",
                            bracket=(s, w))
    try:
        stable = cavity_fixed_point_stable(params, cavity, medium, s_in, s, st)
    except MarginalStability:
        stable = False
    return CavityFixedPoint(s=float(s), branch=SteadyBranch(w=float(x[R1]), state=st,
                                                             stable=stable, residual=res_w))


def cavity_fixed_point_stable(params, cavity, medium, s_in, s, state, margin=1e-9) -> bool:
    """Linear stability of the joint atom + circulating-intensity flow."""
    from .dynamics import CavityFlow
    flow = CavityFlow(cavity, medium, s_in)
    y = np.concatenate([state.vector, [s]])
    ev = flow.eigenvalues(params, y)
    lead = float(np.max(ev.real))
    if -margin <= lead <= margin:
        raise MarginalStability(f"leading eigenvalue real part {lead:.3e} is marginal")
    return lead < -margin


class Detector:
    """Seeded additive Gaussian noise; draw ``index`` is reproducible on its own."""

    def __init__(self, model: DetectorModel, stream: int = 0):
        self.model = model
        self.stream = stream

    def _normal(self, index, size=None):
        rng = np.random.default_rng([self.model.seed, self.stream, int(index)])
        return rng.standard_normal(size)

    def std(self, t_int: float, cavity: bool = False) -> float:
        if not t_int > 0:
            raise ParameterError(f"t_int must be > 0, got {t_int!r}")
        f = self.model.cavity_factor if cavity else 1.0
        return f * self.model.sigma0 * math.sqrt(self.model.tau0 / t_int)

    def detect(self, intensity, t_int: float, index: int = 0, cavity: bool = False):
        """intensity + N(0, sigma0^2 tau0 / t_int); arrays use consecutive draws."""
        sd = self.std(t_int, cavity)
        if sd == 0:
            return intensity if np.ndim(intensity) else float(intensity)
        if np.ndim(intensity) == 0:
            return float(intensity) + sd * float(self._normal(index))
        intensity = np.asarray(intensity, dtype=float)
        return intensity + sd * self._normal(index, intensity.shape)


def detect(intensity, detector: DetectorModel, t_int: float, index: int = 0):
    return Detector(detector).detect(intensity, t_int, index=index)
