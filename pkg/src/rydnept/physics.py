"""Mean-field four-level ladder model with a population-dependent coupling detuning.

States live in a 16-dimensional real representation of the 4x4 density matrix:
the four populations followed by (Re, Im) of the six upper-triangle coherences.
Hermiticity is therefore exact by construction and the generator is a real
16x16 matrix.

The interaction enters as ``delta_c -> delta_c - V * rho_r1r1``.  Because the
generator is affine in every parameter it is assembled from a fixed basis of
per-parameter generators, which keeps time integration cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .exceptions import DegenerateKernel, MarginalStability, ParameterError, StepFailure
from .params import LadderParams

TWO_PI = 2.0 * math.pi
LEVELS = ("g", "e", "r1", "r2")
G, E, R1, R2 = range(4)
PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
COEFFS = ("omega_p", "omega_c", "omega_mw", "delta_p", "delta_c", "delta_mw",
          "gamma_e", "gamma_r1", "gamma_r2", "gamma_d")
IDX_DELTA_C = COEFFS.index("delta_c")
IDX_OMEGA_P = COEFFS.index("omega_p")
# position of Im(rho_ge) in the real vector; Im(rho_eg) = -x[IM_GE]
IM_GE = 5
TRACE_ROW = np.array([1.0] * 4 + [0.0] * 12)

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
DIAG_TOL = 1e-9
PSD_TOL = -1e-8


def _ket(i):
    v = np.zeros(4, dtype=complex)
    v[i] = 1.0
    return v


def _op(i, j):
    return np.outer(_ket(i), _ket(j))


def _real_transform():
    """Matrix T with vec(rho) = T @ x (row-major vec)."""
    T = np.zeros((16, 16), dtype=complex)
    for k in range(4):
        T[:, k] = _op(k, k).ravel()
    for n, (i, j) in enumerate(PAIRS):
        T[:, 4 + 2 * n] = (_op(i, j) + _op(j, i)).ravel()
        T[:, 5 + 2 * n] = (1j * _op(i, j) - 1j * _op(j, i)).ravel()
    return T


_T = _real_transform()
_T_INV = np.linalg.inv(_T)
_I4 = np.eye(4)


def _hamiltonian_super(H):
    return -1j * (np.kron(H, _I4) - np.kron(_I4, H.T))


def _dissipator_super(C):
    CdC = C.conj().T @ C
    return np.kron(C, C.conj()) - 0.5 * (np.kron(CdC, _I4) + np.kron(_I4, CdC.T))


def _to_real(L):
    Gr = _T_INV @ L @ _T
    return np.ascontiguousarray(Gr.real)


def _basis_generators():
    # Couplings carry a minus sign so that absorption is Im(rho_eg) > 0.
    ham = {
        "omega_p": -0.5 * (_op(E, G) + _op(G, E)),
        "omega_c": -0.5 * (_op(R1, E) + _op(E, R1)),
        "omega_mw": -0.5 * (_op(R2, R1) + _op(R1, R2)),
        "delta_p": -(_op(E, E) + _op(R1, R1) + _op(R2, R2)),
        "delta_c": -(_op(R1, R1) + _op(R2, R2)),
        "delta_mw": -_op(R2, R2),
    }
    diss = {
        "gamma_e": [_op(G, E)],
        "gamma_r1": [_op(E, R1)],
        "gamma_r2": [_op(R1, R2)],
        # unit rate -> coherences involving r1 or r2 damped at gamma_d each
        "gamma_d": [math.sqrt(2.0) * _op(R1, R1), math.sqrt(2.0) * _op(R2, R2)],
    }
    out = np.zeros((len(COEFFS), 16, 16))
    for k, name in enumerate(COEFFS):
        if name in ham:
            L = _hamiltonian_super(TWO_PI * ham[name])
        else:
            L = sum(_dissipator_super(math.sqrt(TWO_PI) * C) for C in diss[name])
        out[k] = _to_real(L)
    return out


BASIS = _basis_generators()
BASIS.setflags(write=False)


def coefficients(params: LadderParams, w: float = 0.0) -> np.ndarray:
    """Coefficient vector of ``params`` in the generator basis, with the shift applied."""
    c = np.array([getattr(params, name) for name in COEFFS], dtype=float)
    c[IDX_DELTA_C] -= params.V * w
    return c


def generator_from_coefficients(c: np.ndarray) -> np.ndarray:
    return np.tensordot(c, BASIS, axes=1)


def build_generator(params: LadderParams, w: float = 0.0) -> np.ndarray:
    """Real 16x16 generator for fixed shift population ``w``."""
    if not 0.0 <= w <= 1.0:
        raise ParameterError(f"shift population w must lie in [0, 1], got {w!r}")
    return generator_from_coefficients(coefficients(params, w))


class DensityMatrix4:
    """Hermitian 4x4 density matrix over levels (g, e, r1, r2)."""

    __slots__ = ("_x",)

    def __init__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (16,):
            raise ValueError(f"expected a real 16-vector, got shape {x.shape}")
        self._x = x.copy()
        self._x.setflags(write=False)

    @classmethod
    def from_matrix(cls, rho) -> "DensityMatrix4":
        rho = np.asarray(rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITICITY_TOL:
            raise ParameterError("density matrix is not Hermitian")
        return cls((_T_INV @ rho.ravel()).real)

    @classmethod
    def ground(cls) -> "DensityMatrix4":
        x = np.zeros(16)
        x[G] = 1.0
        return cls(x)

    @classmethod
    def diagonal(cls, populations) -> "DensityMatrix4":
        x = np.zeros(16)
        x[:4] = populations
        return cls(x)

    @property
    def vector(self) -> np.ndarray:
        return self._x

    @property
    def matrix(self) -> np.ndarray:
        return (_T @ self._x).reshape(4, 4)

    @property
    def populations(self) -> np.ndarray:
        return self._x[:4].copy()

    @property
    def rho_r1r1(self) -> float:
        return float(self._x[R1])

    @property
    def rho_ee(self) -> float:
        return float(self._x[E])

    @property
    def rho_eg(self) -> complex:
        return complex(self._x[IM_GE - 1], -self._x[IM_GE])

    def __getitem__(self, key):
        i, j = (LEVELS.index(k) if isinstance(k, str) else k for k in key)
        return self.matrix[i, j]

    def trace(self) -> float:
        return float(np.sum(self._x[:4]))

    def violations(self) -> list:
        """Names of the invariants this state breaks (empty when valid)."""
        out = []
        rho = self.matrix
        if abs(self.trace() - 1.0) > TRACE_TOL:
            out.append("trace")
        d = self._x[:4]
        if np.any(d < -DIAG_TOL) or np.any(d > 1 + DIAG_TOL):
            out.append("diagonal")
        if np.min(np.linalg.eigvalsh(rho)) < PSD_TOL:
            out.append("positivity")
        return out

    def is_valid(self) -> bool:
        return not self.violations()

    def __repr__(self):
        p = ", ".join(f"{v:.6g}" for v in self._x[:4])
        return f"DensityMatrix4(populations=[{p}])"


def _kernel_dimension(Gm, rel_tol=1e-10):
    s = np.linalg.svd(Gm, compute_uv=False)
    scale = max(s[0], 1.0)
    return int(np.sum(s <= rel_tol * scale))


def linear_steady_state(generator: np.ndarray, check_kernel: bool = True) -> DensityMatrix4:
    """Unit-trace null vector of a (trace-preserving) generator."""
    Gm = np.asarray(generator, dtype=float)
    if check_kernel:
        nullity = _kernel_dimension(Gm)
        if nullity != 1:
            raise DegenerateKernel(f"generator null space has dimension {nullity}, expected 1")
    A = Gm.copy()
    A[0] = TRACE_ROW
    rhs = np.zeros(16)
    rhs[0] = 1.0
    x = np.linalg.solve(A, rhs)
    return DensityMatrix4(x)


def _batched_steady(c: np.ndarray, V: float, ws: np.ndarray) -> np.ndarray:
    """Steady-state vectors for each shift population in ``ws``; shape (len(ws), 16)."""
    G0 = generator_from_coefficients(c)
    G1 = BASIS[IDX_DELTA_C]
    A = G0[None, :, :] - (V * ws)[:, None, None] * G1[None, :, :]
    A[:, 0, :] = TRACE_ROW
    rhs = np.zeros((len(ws), 16, 1))
    rhs[:, 0, 0] = 1.0
    return np.linalg.solve(A, rhs)[..., 0]


def population_map(params: LadderParams, ws) -> np.ndarray:
    """rho_r1r1 of the linear steady state at each fixed shift population."""
    ws = np.atleast_1d(np.asarray(ws, dtype=float))
    return _batched_steady(coefficients(params), params.V, ws)[:, R1]


@dataclass(frozen=True)
class SteadyBranch:
    w: float
    state: DensityMatrix4
    stable: bool
    residual: float


def _roots_on_grid(fun, grid, values):
    """Sign-change roots of a scalar function sampled on ``grid``, refined by brentq."""
    roots = []
    n = len(grid)
    i = 0
    while i < n:
        if values[i] == 0.0:
            roots.append(float(grid[i]))
            i += 1
            continue
        if i + 1 < n and values[i + 1] != 0.0 and np.sign(values[i]) != np.sign(values[i + 1]):
            r = brentq(fun, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps,
                       maxiter=200)
            roots.append(float(r))
        i += 1
    return roots


def fixed_point_roots(params: LadderParams, step: float = 1e-3) -> list:
    """All roots of g(w) = rho_r1r1(w) - w on [0, 1] (dense scan + bracketing refinement)."""
    n = int(math.ceil(1.0 / step)) + 1
    grid = np.linspace(0.0, 1.0, n)
    c = coefficients(params)
    vals = _batched_steady(c, params.V, grid)[:, R1] - grid

    def g(w):
        return _batched_steady(c, params.V, np.array([w]))[0, R1] - w

    return _roots_on_grid(g, grid, vals)


def _flow_jacobian(c, V, x):
    """Jacobian of x' = G(c - V x_r1 e_dc) x with respect to x."""
    Gm = generator_from_coefficients(c) - V * x[R1] * BASIS[IDX_DELTA_C]
    J = Gm.copy()
    J[:, R1] -= V * (BASIS[IDX_DELTA_C] @ x)
    return J


# x = E_RED @ y + e_g with y = x[1:]; eliminates the conserved trace
_E_RED = np.zeros((16, 15))
_E_RED[1:, :] = np.eye(15)
_E_RED[0, :3] = -1.0


def reduced_jacobian(J: np.ndarray) -> np.ndarray:
    """Restrict a 16x16 trace-preserving Jacobian to the 15-dim unit-trace manifold."""
    return (J @ _E_RED)[1:, :]


def stability_eigenvalues(params: LadderParams, state: DensityMatrix4) -> np.ndarray:
    J = _flow_jacobian(coefficients(params), params.V, state.vector)
    return np.linalg.eigvals(reduced_jacobian(J))


def classify_stability(params: LadderParams, branch, margin: float = 1e-9) -> bool:
    """True iff every eigenvalue of the linearised mean-field flow has Re < -margin."""
    state = branch.state if isinstance(branch, SteadyBranch) else branch
    ev = stability_eigenvalues(params, state)
    lead = float(np.max(ev.real))
    if -margin <= lead <= margin:
        raise MarginalStability(f"leading eigenvalue real part {lead:.3e} is marginal")
    return lead < -margin


def self_consistent_branches(params: LadderParams, step: float = 1e-3,
                             tol: float = 1e-9) -> list:
    """Every mean-field steady state, ordered by Rydberg population."""
    out = []
    c = coefficients(params)
    for w in fixed_point_roots(params, step=step):
        x = _batched_steady(c, params.V, np.array([w]))[0]
        state = DensityMatrix4(x)
        residual = abs(x[R1] - w)
        if residual > tol:
            raise RuntimeError(f"fixed-point refinement left residual {residual:.2e} at w={w}")
        # report the state's own population so |w - rho_r1r1| is exactly zero
        w_state = float(x[R1])
        branch = SteadyBranch(w=w_state, state=state, stable=False, residual=residual)
        try:
            stable = classify_stability(params, branch)
        except MarginalStability:
            stable = False
        out.append(SteadyBranch(w=w_state, state=state, stable=stable, residual=residual))
    return out


ParamSource = Union[LadderParams, Callable[[float], LadderParams]]


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray  # shape (len(t), 16)

    def __len__(self):
        return len(self.t)

    def state(self, i: int) -> DensityMatrix4:
        return DensityMatrix4(self.x[i])

    @property
    def states(self) -> list:
        return [DensityMatrix4(v) for v in self.x]

    def population(self, level) -> np.ndarray:
        k = LEVELS.index(level) if isinstance(level, str) else level
        return self.x[:, k].copy()


def integrate(rhs, jac, y0, t_span, t_eval=None, rtol=1e-8, atol=1e-10,
              method="Radau", max_step=np.inf, first_step=None):
    """Thin wrapper over scipy's adaptive integrators that raises StepFailure."""
    sol = solve_ivp(rhs, t_span, y0, method=method, jac=jac, t_eval=t_eval,
                    rtol=rtol, atol=atol, max_step=max_step, first_step=first_step)
    if sol.status != 0:
        raise StepFailure(f"integration stopped at t={sol.t[-1]:.6g} us: {sol.message}")
    return sol


def evolve(params_of_time: ParamSource, rho0: DensityMatrix4, t_span,
           rtol: float = 1e-8, atol: float = 1e-10, t_eval: Sequence[float] | None = None,
           method: str = "LSODA") -> Trajectory:
    """Integrate the nonlinear mean-field equation over ``t_span`` (us).

    ``params_of_time`` is either a fixed :class:`LadderParams` or a callable
    returning one for each time.  The shift uses the instantaneous rho_r1r1.
    LSODA switches between stiff and non-stiff steppers as the coherences need.
    """
    if isinstance(rho0, DensityMatrix4):
        x0 = rho0.vector.copy()
    else:
        x0 = DensityMatrix4.from_matrix(rho0).vector.copy()
    if isinstance(t_span, (int, float)):
        t_span = (0.0, float(t_span))
    if callable(params_of_time) and not isinstance(params_of_time, LadderParams):
        param_fn = params_of_time
    else:
        fixed = params_of_time
        param_fn = lambda t: fixed  # noqa: E731

    dc = BASIS[IDX_DELTA_C]

    def rhs(t, x):
        p = param_fn(t)
        c = coefficients(p, x[R1])
        return generator_from_coefficients(c) @ x

    def jac(t, x):
        p = param_fn(t)
        J = generator_from_coefficients(coefficients(p, x[R1]))
        J[:, R1] -= p.V * (dc @ x)
        return J

    sol = integrate(rhs, jac, x0, tuple(t_span), t_eval=t_eval, rtol=rtol, atol=atol,
                    method=method)
    return Trajectory(t=sol.t, x=sol.y.T.copy())
