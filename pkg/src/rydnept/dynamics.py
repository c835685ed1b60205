"""Right-hand sides for time-domain sweeps.

Both flows carry an extra accumulator ``q`` whose derivative is the detected
intensity, so a window average is ``(q(t1) - q(t0)) / (t1 - t0)`` exactly as
resolved by the integrator.  The cavity flow adds the circulating intensity
``s`` (Rabi-squared units) relaxing at the cavity linewidth towards
``s_in * B(a)``.
"""
from __future__ import annotations

import math

import numpy as np

from .params import CavityParams, LadderParams, MediumParams
from .physics import (
    BASIS,
    IDX_DELTA_C,
    IDX_OMEGA_P,
    IM_GE,
    R1,
    TWO_PI,
    coefficients,
    generator_from_coefficients,
    integrate,
    reduced_jacobian,
)

_DC = BASIS[IDX_DELTA_C]
_OP = BASIS[IDX_OMEGA_P]


class FreeSpaceFlow:
    """Atoms driven directly by the input probe; detected = exp(-od0 * a)."""

    n_extra = 1

    def __init__(self, medium: MediumParams):
        self.od0 = medium.od0

    def intensity(self, c, x):
        om = c[IDX_OMEGA_P]
        if om == 0:
            return 1.0
        a = c_gamma_e(c) * (-x[IM_GE]) / om
        return math.exp(-self.od0 * a)

    def rhs(self, c, V, y):
        x = y[:16]
        cc = c.copy()
        cc[IDX_DELTA_C] -= V * x[R1]
        out = np.empty_like(y)
        out[:16] = generator_from_coefficients(cc) @ x
        out[16] = self.intensity(c, x)
        return out

    def jac(self, c, V, y):
        x = y[:16]
        cc = c.copy()
        cc[IDX_DELTA_C] -= V * x[R1]
        J = np.zeros((17, 17))
        J[:16, :16] = generator_from_coefficients(cc)
        J[:16, R1] -= V * (_DC @ x)
        om = c[IDX_OMEGA_P]
        if om != 0:
            J[16, IM_GE] = self.od0 * self.intensity(c, x) * c_gamma_e(c) / om
        return J

    def initial(self, x):
        return np.concatenate([x, [0.0]])

    def atom_state(self, y):
        return y[:16]


def c_gamma_e(c):
    return c[6]


class CavityFlow:
    """Atoms inside a resonant ring cavity; detected = t_out * s / s_in."""

    n_extra = 2

    def __init__(self, cavity: CavityParams, medium: MediumParams, s_in: float):
        if s_in <= 0:
            raise ValueError("cavity flow needs a positive input intensity")
        self.cavity = cavity
        self.od0 = medium.od0
        self.s_in = float(s_in)
        self.kappa = TWO_PI * cavity.linewidth
        g = (1.0 - cavity.t_in) * (1.0 - cavity.loss_empty) * (1.0 - cavity.loss_cell)
        self.r0 = math.sqrt(g)

    def _buildup(self, a):
        """B(a) and dB/da with a clipped to [0, inf)."""
        if a <= 0.0:
            a, clipped = 0.0, True
        else:
            clipped = False
        r = self.r0 * math.exp(-0.5 * self.od0 * a)
        B = self.cavity.t_in / (1.0 - r) ** 2
        dB = 0.0 if clipped else -self.od0 * self.cavity.t_in * r / (1.0 - r) ** 3
        return B, dB

    def _drive(self, c, y):
        x = y[:16]
        s = max(y[16], 1e-300)
        om = math.sqrt(s)
        cc = c.copy()
        cc[IDX_OMEGA_P] = om
        return x, s, om, cc

    def rhs(self, c, V, y):
        x, s, om, cc = self._drive(c, y)
        a = c_gamma_e(c) * (-x[IM_GE]) / om
        B, _ = self._buildup(a)
        cc[IDX_DELTA_C] -= V * x[R1]
        out = np.empty_like(y)
        out[:16] = generator_from_coefficients(cc) @ x
        out[16] = self.kappa * (self.s_in * B - s)
        out[17] = self.cavity.t_out * s / self.s_in
        return out

    def jac(self, c, V, y):
        x, s, om, cc = self._drive(c, y)
        ge = c_gamma_e(c)
        a = ge * (-x[IM_GE]) / om
        B, dB = self._buildup(a)
        cc[IDX_DELTA_C] -= V * x[R1]
        n = len(y)
        J = np.zeros((n, n))
        J[:16, :16] = generator_from_coefficients(cc)
        J[:16, R1] -= V * (_DC @ x)
        J[:16, 16] = (_OP @ x) / (2.0 * om)
        J[16, IM_GE] = self.kappa * self.s_in * dB * (-ge / om)
        J[16, 16] = self.kappa * (self.s_in * dB * (-a / (2.0 * s)) - 1.0)
        if n > 17:
            J[17, 16] = self.cavity.t_out / self.s_in
        return J

    def intensity(self, c, y):
        return self.cavity.t_out * y[16] / self.s_in

    def initial(self, x, s):
        return np.concatenate([x, [s, 0.0]])

    def atom_state(self, y):
        return y[:16]

    def eigenvalues(self, params: LadderParams, y):
        """Spectrum of the linearised atom + intensity flow on the unit-trace manifold."""
        c = coefficients(params)
        y = np.concatenate([np.asarray(y, dtype=float)[:17], [0.0]])
        J = self.jac(c, params.V, y)[:17, :17]
        # eliminate the trace from the atom block; keep the intensity coordinate
        red = np.zeros((17, 16))
        red[1:16, :15] = np.eye(15)
        red[0, :3] = -1.0
        red[16, 15] = 1.0
        Jr = (J @ red)[1:, :]
        return np.linalg.eigvals(Jr)


def run_flow(flow, coeff_of_time, V, y0, t_span, t_eval=None, rtol=1e-6, atol=1e-9,
             method="Radau"):
    """Integrate ``flow`` with time-dependent coefficients; returns the scipy solution."""
    def rhs(t, y):
        return flow.rhs(coeff_of_time(t), V, y)

    def jac(t, y):
        return flow.jac(coeff_of_time(t), V, y)

    return integrate(rhs, jac, y0, t_span, t_eval=t_eval, rtol=rtol, atol=atol, method=method)


def relax(flow, c, V, y0, t_relax=20.0, tol=1e-9, max_doublings=6, rtol=1e-9, atol=1e-11):
    """Evolve at fixed coefficients until the atomic derivative is below ``tol`` (per us)."""
    y = np.array(y0, dtype=float)
    T = t_relax
    for _ in range(max_doublings + 1):
        sol = run_flow(flow, lambda t: c, V, y, (0.0, T), rtol=rtol, atol=atol)
        y = sol.y[:, -1].copy()
        y[-1] = 0.0
        d = flow.rhs(c, V, y)
        if np.max(np.abs(d[:-1])) < tol * max(1.0, np.max(np.abs(y[:-1]))):
            return y
        T *= 2.0
    return y
