"""Estimation chain: edge slope, Fisher information, power-law scaling, a.c. Stark
shift model, AT calibration and field sensitivity.

The fits are exposed both as plain functions and as scikit-learn style
estimators (``fit`` / ``predict`` / ``get_params``) so they drop into pipelines
and grid searches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants as _const
from scipy import stats
from scipy.optimize import curve_fit
from scipy.signal import find_peaks
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d, check_xy, sorted_xy
from .exceptions import (
    DegenerateData,
    NoEdge,
    NonpositiveF,
    NonpositivePoint,
    NoSplitting,
    OutOfLinearRange,
    RegionTooSmall,
    TooFewPoints,
    TooFewSamples,
    ZeroVariance,
)

BOHR_RADIUS = _const.physical_constants["Bohr radius"][0]
E_A0 = _const.e * BOHR_RADIUS  # C m
MV_PER_CM = 0.1  # V/m per mV/cm
DEFAULT_MU0 = 2938.0
DEFAULT_WINDOW = 5


# --- field <-> Rabi frequency ---------------------------------------------

def rabi_from_field(E, mu0: float = DEFAULT_MU0):
    """MW Rabi frequency Omega/2pi (MHz) for field amplitude ``E`` (mV/cm).

    ``mu0`` is the transition dipole in units of e*a0.
    """
    E = np.asarray(E, dtype=float) if np.ndim(E) else float(E)
    if np.any(np.asarray(E) < 0):
        raise ValueError("field amplitude must be >= 0")
    return mu0 * E_A0 * E * MV_PER_CM / _const.h * 1e-6


def field_from_rabi(omega, mu0: float = DEFAULT_MU0):
    """Inverse of :func:`rabi_from_field`; ``omega`` in MHz, result in mV/cm."""
    omega = np.asarray(omega, dtype=float) if np.ndim(omega) else float(omega)
    return omega * 1e6 * _const.h / (mu0 * E_A0 * MV_PER_CM)


# --- slope and noise --------------------------------------------------------

@dataclass(frozen=True)
class CriticalPoint:
    x_c: float
    k: float
    window: int
    y_c: float = float("nan")  # local-fit intensity at x_c
    span: float = float("nan")  # x-width of the fit window


def sliding_slopes(x, y, window: int = DEFAULT_WINDOW):
    """Least-squares slope, centre and intercept-at-centre for each window position."""
    n = len(x)
    kern = np.ones(window)
    sx = np.convolve(x, kern, "valid")
    sy = np.convolve(y, kern, "valid")
    sxx = np.convolve(x * x, kern, "valid")
    sxy = np.convolve(x * y, kern, "valid")
    den = window * sxx - sx * sx
    slope = (window * sxy - sx * sy) / den
    h = window // 2
    centres = x[h:n - h]
    mean_y = sy / window
    mean_x = sx / window
    y_at_c = mean_y + slope * (centres - mean_x)
    return slope, centres, y_at_c


def max_slope(trace, window: int = DEFAULT_WINDOW) -> CriticalPoint:
    """Window centre with the steepest local linear fit; ties go to smaller x."""
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    x, y = sorted_xy(trace)
    if len(x) < max(5, window):
        raise TooFewPoints(f"need at least {max(5, window)} points, got {len(x)}")
    slope, centres, yc = sliding_slopes(x, y, window)
    a = np.abs(slope)
    # slopes equal up to roundoff count as ties
    i = int(np.flatnonzero(a >= a.max() * (1 - 1e-12))[0])
    h = window // 2
    return CriticalPoint(x_c=float(centres[i]), k=float(slope[i]), window=window,
                         y_c=float(yc[i]), span=float(x[i + 2 * h] - x[i]))


def noise_variance(trace, region) -> float:
    """Residual variance about a linear baseline over ``region = (lo, hi)``."""
    x, y = sorted_xy(trace)
    lo, hi = min(region), max(region)
    m = (x >= lo) & (x <= hi)
    if m.sum() < 20:
        raise RegionTooSmall(f"region {region} holds {int(m.sum())} points; need >= 20")
    xs, ys = x[m], y[m]
    coef = np.polyfit(xs - xs.mean(), ys, 1)
    resid = ys - np.polyval(coef, xs - xs.mean())
    # two fitted parameters
    return float(np.sum(resid ** 2) / (len(ys) - 2))


# --- Fisher information -----------------------------------------------------

@dataclass(frozen=True)
class FisherResult:
    k: float
    var_mu: float
    F: float
    t_int: float | None = None


def fisher(k: float, var_mu: float, t_int: float | None = None) -> FisherResult:
    if not var_mu > 0:
        raise ZeroVariance(f"noise variance must be > 0, got {var_mu!r}")
    return FisherResult(k=k, var_mu=var_mu, F=k * k / var_mu, t_int=t_int)


def cramer_rao_bound(F: float) -> float:
    """Smallest unbiased shift uncertainty, 1/sqrt(F)."""
    if not F > 0:
        raise NonpositiveF(f"Fisher information must be > 0, got {F!r}")
    return 1.0 / math.sqrt(F)


@dataclass(frozen=True)
class PowerLawFit:
    A: float
    lam: float
    t0: float
    rms: float

    def __call__(self, t):
        return self.A * (np.asarray(t, dtype=float) / self.t0) ** self.lam


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """F = A (t / t0)^lambda, fitted by ordinary least squares in log-log space."""

    def __init__(self, t0: float = 1800.0):
        self.t0 = t0

    def fit(self, t, F):
        t = as_1d(t, "t")
        F = as_1d(F, "F")
        if len(t) != len(F):
            raise ValueError("t and F must have equal length")
        if len(t) < 3:
            raise TooFewPoints(f"power-law fit needs >= 3 points, got {len(t)}")
        if np.any(t <= 0) or np.any(F <= 0) or not self.t0 > 0:
            raise NonpositivePoint("power-law fit needs strictly positive t, F and t0")
        u = np.log(t / self.t0)
        v = np.log(F)
        X = np.column_stack([np.ones_like(u), u])
        (lnA, lam), *_ = np.linalg.lstsq(X, v, rcond=None)
        resid = v - X @ np.array([lnA, lam])
        self.A_ = float(math.exp(lnA))
        self.lambda_ = float(lam)
        self.rms_ = float(np.sqrt(np.mean(resid ** 2)))
        return self

    def predict(self, t):
        check_is_fitted(self, "A_")
        return self.A_ * (as_1d(t, "t") / self.t0) ** self.lambda_

    def result(self) -> PowerLawFit:
        check_is_fitted(self, "A_")
        return PowerLawFit(A=self.A_, lam=self.lambda_, t0=self.t0, rms=self.rms_)


def fit_power_law(points, t0: float) -> PowerLawFit:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (t, F) pairs")
    return PowerLawRegressor(t0=t0).fit(pts[:, 0], pts[:, 1]).result()


# --- a.c. Stark shift -------------------------------------------------------

@dataclass(frozen=True)
class ShiftModel:
    delta_mw: float = -200.0  # MHz
    eta: float = 0.0  # 1/MHz
    mu0: float = DEFAULT_MU0

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be > 0, got {self.mu0!r}")


def stark_term(omega, delta_mw):
    omega = np.asarray(omega, dtype=float)
    return -(delta_mw / 2.0 + np.sqrt(delta_mw ** 2 + omega ** 2) / 2.0)


def predict_shift(E, model: ShiftModel):
    """Edge shift (MHz): a.c. Stark term minus eta * Omega^2."""
    om = rabi_from_field(E, model.mu0)
    out = stark_term(om, model.delta_mw) - model.eta * np.asarray(om) ** 2
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class EtaFit:
    eta: float
    ci: tuple
    rms: float


class StarkShiftRegressor(RegressorMixin, BaseEstimator):
    """Fit eta in delta(E) = Stark(E) - eta * Omega(E)^2 with eta the only free parameter.

    The model is linear in eta, so the least-squares solution is closed form.
    ``confidence`` sets the two-sided Student-t interval reported in ``eta_ci_``.
    """

    def __init__(self, delta_mw: float = -200.0, mu0: float = DEFAULT_MU0,
                 confidence: float = 0.95):
        self.delta_mw = delta_mw
        self.mu0 = mu0
        self.confidence = confidence

    def fit(self, E, delta):
        E = as_1d(E, "E")
        delta = as_1d(delta, "delta")
        if len(E) != len(delta):
            raise ValueError("E and delta must have equal length")
        if len(E) < 2:
            raise TooFewPoints(f"eta fit needs >= 2 points, got {len(E)}")
        if np.all(E == E[0]):
            raise DegenerateData("all field values are equal")
        om2 = rabi_from_field(E, self.mu0) ** 2
        r = delta - stark_term(np.sqrt(om2), self.delta_mw)
        s4 = float(np.sum(om2 * om2))
        eta = -float(np.sum(om2 * r)) / s4
        resid = r + eta * om2
        n = len(E)
        dof = n - 1
        se = math.sqrt(float(np.sum(resid ** 2)) / dof / s4)
        half = stats.t.ppf(0.5 + self.confidence / 2.0, dof) * se
        self.eta_ = eta
        self.eta_ci_ = (float(eta - half), float(eta + half))
        self.rms_ = float(np.sqrt(np.mean(resid ** 2)))
        return self

    def predict(self, E):
        check_is_fitted(self, "eta_")
        return predict_shift(as_1d(E, "E"), ShiftModel(self.delta_mw, self.eta_, self.mu0))


def fit_eta(data, delta_mw: float, mu0: float = DEFAULT_MU0) -> EtaFit:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("data must be a sequence of (E, delta) pairs")
    reg = StarkShiftRegressor(delta_mw=delta_mw, mu0=mu0).fit(arr[:, 0], arr[:, 1])
    return EtaFit(eta=reg.eta_, ci=reg.eta_ci_, rms=reg.rms_)


# --- shifts between traces ----------------------------------------------------

@dataclass(frozen=True)
class ShiftResult:
    delta: float
    method: str  # "align", "max_slope" or "xcorr"
    reference: CriticalPoint
    shifted: CriticalPoint
    n_points: int = 0  # points used by the alignment


def _smoothing_window(n: int, window: int) -> int:
    return max(window, (n // 20) | 1)


def _strong_run(x, y, window: int):
    """Index range of the contiguous run of windowed slopes, around the steepest
    one, that stay above half its magnitude; also returns the window centres."""
    slope, centres, _ = sliding_slopes(x, y, window)
    i = int(np.argmax(np.abs(slope)))
    strong = np.abs(slope) >= 0.5 * abs(slope[i])
    lo = hi = i
    while lo > 0 and strong[lo - 1]:
        lo -= 1
    while hi < len(strong) - 1 and strong[hi + 1]:
        hi += 1
    return lo, hi, centres


def edge_span(trace, window: int = DEFAULT_WINDOW) -> int:
    """Points across the edge at half-maximum slope.

    The slope profile uses a window of about 5% of the trace so noise does not
    split the edge; the window's own broadening is subtracted, so a bare jump
    between two samples spans ~0 points.
    """
    x, y = sorted_xy(trace)
    if np.ptp(y) == 0:
        return 0
    wide = _smoothing_window(len(x), window)
    lo, hi, _ = _strong_run(x, y, wide)
    return max(hi - lo + 1 - (wide - 1), 0)


def _edge_half_width(x, y, cp: CriticalPoint) -> float:
    """Half x-extent of the smoothed half-maximum slope run, at least half the
    slope window."""
    lo, hi, centres = _strong_run(x, y, _smoothing_window(len(x), cp.window))
    return max(0.5 * (centres[hi] - centres[lo]), 0.5 * cp.span)


def _xcorr_shift(ref, sh):
    """Lag maximising the correlation of the edge derivatives, parabolic sub-step."""
    xr, yr = sorted_xy(ref)
    xs, ys = sorted_xy(sh)
    lo, hi = max(xr[0], xs[0]), min(xr[-1], xs[-1])
    step = min(np.min(np.diff(xr)), np.min(np.diff(xs)))
    grid = np.arange(lo, hi + 0.5 * step, step)
    dr = np.gradient(np.interp(grid, xr, yr))
    ds = np.gradient(np.interp(grid, xs, ys))
    c = np.correlate(ds - ds.mean(), dr - dr.mean(), "full")
    i = int(np.argmax(c))
    frac = 0.0
    if 0 < i < len(c) - 1:
        den = c[i - 1] - 2 * c[i] + c[i + 1]
        if den != 0:
            frac = 0.5 * (c[i - 1] - c[i + 1]) / den
    lag = i - (len(grid) - 1) + frac
    return float(lag * step)


def _line_crossing(x, y, centre, half, level):
    m = np.abs(x - centre) <= half
    slope, icpt = np.polyfit(x[m] - centre, y[m], 1)
    return centre + (level - icpt) / slope, int(m.sum())


def _align_shift(ref, sh, cr: CriticalPoint, cs: CriticalPoint, iterations: int = 20):
    """Crossing of a common intensity level by straight-line fits to both edges.

    Both lines cover the reference's half-maximum slope region; the shifted
    trace's region follows the current shift estimate so the two fits see the
    same part of the edge, and noise is averaged over the whole edge.
    """
    xr, yr = sorted_xy(ref)
    xs, ys = sorted_xy(sh)
    half = _edge_half_width(xr, yr, cr)
    level = cr.y_c
    # re-centre the reference fit on its own crossing (the noisy argmax can sit
    # off the middle of the edge); the loop stops once the centre settles
    centre = cr.x_c
    x_r, n_r = _line_crossing(xr, yr, centre, half, level)
    for _ in range(iterations):
        if abs(x_r - centre) > half or abs(x_r - centre) <= 1e-12 * max(half, 1.0):
            break
        centre = x_r
        x_r, n_r = _line_crossing(xr, yr, centre, half, level)
    d = cs.x_c - cr.x_c
    n_s = 0
    for _ in range(iterations):
        x_s, n_s = _line_crossing(xs, ys, centre + d, half, level)
        d_new = float(x_s - x_r)
        done = abs(d_new - d) <= 1e-12 * max(half, 1.0)
        d = d_new
        if done:
            break
    return d, min(n_r, n_s)


def shift_between_traces(reference, shifted, window: int = DEFAULT_WINDOW,
                         k_floor: float = 0.0, min_span: int = 5,
                         method: str = "align") -> ShiftResult:
    """Critical-point displacement ``x_c(shifted) - x_c(reference)``.

    ``method="align"`` refines the difference of the two max-slope points by
    fitting a line to each edge and comparing where they cross a common
    intensity level (sub-grid, averages noise over the edge); ``"max_slope"``
    reports the bare difference.  Edges narrower than
    ``min_span`` points fall back to derivative cross-correlation.
    """
    if reference.axis != shifted.axis:
        raise ValueError("traces are on different axes")
    if method not in ("align", "max_slope"):
        raise ValueError(f"method must be 'align' or 'max_slope', got {method!r}")
    cr = max_slope(reference, window)
    cs = max_slope(shifted, window)
    for name, cp in (("reference", cr), ("shifted", cs)):
        if abs(cp.k) <= k_floor:
            raise NoEdge(f"{name} trace has no edge (|k| = {abs(cp.k):.3g} <= {k_floor})")
    if edge_span(reference, window) < min_span or edge_span(shifted, window) < min_span:
        return ShiftResult(_xcorr_shift(reference, shifted), "xcorr", cr, cs)
    if method == "max_slope":
        return ShiftResult(cs.x_c - cr.x_c, "max_slope", cr, cs)
    d, n = _align_shift(reference, shifted, cr, cs)
    return ShiftResult(d, "align", cr, cs, n)


# --- AT calibration -----------------------------------------------------------

@dataclass(frozen=True)
class ATCalibration:
    omega_mw: float
    E: float
    peaks: tuple


def _two_lorentz(x, a1, x1, w1, a2, x2, w2, c):
    return (c + a1 / (1 + ((x - x1) / w1) ** 2) + a2 / (1 + ((x - x2) / w2) ** 2))


def at_calibration(trace, mu0: float = DEFAULT_MU0, kind: str = "max",
                   min_prominence: float = 0.05) -> ATCalibration:
    """Omega_MW from the separation of the two AT peaks, and the matching field.

    ``kind="min"`` treats dips (absorption) as the peaks.  Peaks below
    ``min_prominence`` of the trace's range are ignored.
    """
    x, y = sorted_xy(trace)
    s = 1.0 if kind == "max" else -1.0
    yy = s * y
    rng = float(np.ptp(yy))
    if rng == 0:
        raise NoSplitting("flat trace")
    idx, props = find_peaks(yy, prominence=min_prominence * rng)
    if len(idx) < 2:
        raise NoSplitting(f"found {len(idx)} peak(s); AT splitting not resolved")
    top = np.sort(idx[np.argsort(props["prominences"])[-2:]])
    base = float(np.min(yy))
    dx = float(np.median(np.diff(x)))
    p0 = [yy[top[0]] - base, x[top[0]], 3 * dx, yy[top[1]] - base, x[top[1]], 3 * dx, base]
    try:
        popt, _ = curve_fit(_two_lorentz, x, yy, p0=p0, maxfev=20000)
        p1, p2 = sorted([popt[1], popt[4]])
        if not (x[0] <= p1 <= x[-1] and x[0] <= p2 <= x[-1]):
            raise RuntimeError
    except (RuntimeError, ValueError):
        p1, p2 = float(x[top[0]]), float(x[top[1]])
    om = float(p2 - p1)
    return ATCalibration(omega_mw=om, E=float(field_from_rabi(om, mu0)), peaks=(p1, p2))


# --- sensitivity --------------------------------------------------------------

def sensitivity(delta_e_uv: float, t_int_us: float) -> float:
    """S (nV/cm/sqrt(Hz)) from field uncertainty (uV/cm) and integration time (us)."""
    return delta_e_uv * 1e3 * math.sqrt(t_int_us * 1e-6)


@dataclass(frozen=True)
class SensitivityReport:
    k: float  # intensity per mV/cm
    sigma_y: float
    var: float
    delta_e: float  # uV/cm
    t_int: float  # us
    S: float  # nV/cm/sqrt(Hz)
    x_c: float
    window: int
    width: str = "sigma"

    def to_dict(self) -> dict:
        return {"k": self.k, "sigma_y": self.sigma_y, "var": self.var,
                "delta_e": self.delta_e, "t_int": self.t_int, "S": self.S,
                "x_c": self.x_c, "window": self.window, "width": self.width}


FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def sensitivity_report(edge_trace, samples, t_int: float, window: int = DEFAULT_WINDOW,
                       width: str = "sigma", k_floor: float = 0.0) -> SensitivityReport:
    """Histogram width of repeated edge samples propagated through the edge slope.

    The edge trace must be on the MW-field axis in mV/cm.  ``width="fwhm"`` uses
    the Gaussian FWHM instead of the standard deviation.
    """
    cp = max_slope(edge_trace, window)
    if not np.isfinite(cp.k) or abs(cp.k) <= k_floor:
        raise NoEdge(f"edge slope |k| = {abs(cp.k):.3g} is below the floor {k_floor}")
    samples = as_1d(samples, "samples")
    if len(samples) < 50:
        raise TooFewSamples(f"need >= 50 samples, got {len(samples)}")
    _, sigma = stats.norm.fit(samples)
    if width == "fwhm":
        w = FWHM_PER_SIGMA * sigma
    elif width == "sigma":
        w = sigma
    else:
        raise ValueError(f"width must be 'sigma' or 'fwhm', got {width!r}")
    delta_e = w / abs(cp.k) * 1e3  # mV/cm -> uV/cm
    return SensitivityReport(k=cp.k, sigma_y=float(sigma), var=float(sigma ** 2),
                             delta_e=float(delta_e), t_int=t_int,
                             S=sensitivity(delta_e, t_int), x_c=cp.x_c, window=window,
                             width=width)


# --- field estimation ---------------------------------------------------------

class EdgeFieldEstimator(BaseEstimator):
    """Local linear inversion of an intensity reading at the steepest edge point.

    ``fit(E, I)`` takes an edge trace (E ascending or descending); ``predict(I)``
    returns ``E_ref + (I - I_ref) / k`` and raises OutOfLinearRange outside the
    intensity span covered by the fit window.
    """

    def __init__(self, window: int = DEFAULT_WINDOW):
        self.window = window

    def fit(self, E, I):
        E, I = check_xy(E, I)
        cp = max_slope((E, I), self.window)
        if cp.k == 0:
            raise NoEdge("flat edge trace")
        self.E_ref_ = cp.x_c
        self.I_ref_ = cp.y_c
        self.k_ = cp.k
        self.span_ = abs(cp.k) * cp.span
        return self

    def predict(self, I):
        check_is_fitted(self, "k_")
        I = np.asarray(I, dtype=float)
        dev = np.abs(I - self.I_ref_)
        if np.any(dev > self.span_):
            raise OutOfLinearRange(
                f"|I - I_ref| = {float(np.max(dev)):.4g} exceeds the linear span {self.span_:.4g}")
        out = self.E_ref_ + (I - self.I_ref_) / self.k_
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FieldCalibration:
    critical: CriticalPoint
    I_ref: float


def estimate_field(intensity, calibration) -> float:
    """E = E_ref + (I - I_ref) / k around a calibrated critical point."""
    if isinstance(calibration, EdgeFieldEstimator):
        return calibration.predict(intensity)
    cp = calibration.critical
    est = EdgeFieldEstimator(window=cp.window)
    est.E_ref_, est.I_ref_, est.k_ = cp.x_c, calibration.I_ref, cp.k
    est.span_ = abs(cp.k) * cp.span if np.isfinite(cp.span) else np.inf
    return est.predict(intensity)
