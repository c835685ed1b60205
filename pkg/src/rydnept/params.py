"""Parameter containers for the ladder model, the optics chain and the detector.

Every frequency and rate is stored in ordinary-frequency MHz (the ``Omega/2pi``
convention); factors of 2pi are applied only inside the generators.  Times are
in microseconds and fields in mV/cm.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .exceptions import ParameterError


@dataclass(frozen=True)
class LadderParams:
    """Drives, detunings and rates of the g-e-r1-r2 ladder (all MHz)."""

    omega_p: float = 19.0
    omega_c: float = 20.0
    omega_mw: float = 0.0
    delta_p: float = 0.0
    delta_c: float = 0.0
    delta_mw: float = -200.0
    gamma_e: float = 5.2
    gamma_r1: float = 0.1
    gamma_r2: float = 0.1
    gamma_d: float = 0.5
    V: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ParameterError(f"{f.name} must be finite, got {v!r}")
        for name in ("omega_p", "omega_c", "omega_mw",
                     "gamma_e", "gamma_r1", "gamma_r2", "gamma_d"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)!r}")

    def replace(self, **changes) -> "LadderParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MediumParams:
    od0: float = 2.0
    length: float = 15.0  # mm, informational only

    def __post_init__(self):
        if not (self.od0 >= 0 and math.isfinite(self.od0)):
            raise ParameterError(f"od0 must be >= 0, got {self.od0!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CavityParams:
    """Resonant ring cavity.

    ``linewidth`` (MHz) sets the relaxation rate of the circulating intensity in
    time-domain runs; ``t_out`` is the power transmission of the output mirror
    whose leakage is detected.
    """

    # defaults reproduce an empty finesse of 85 and a loaded finesse of 20
    t_in: float = 0.06
    loss_empty: float = 0.011968023315816478
    loss_cell: float = 0.2133104304054685
    on_resonance: bool = True
    t_out: float = 0.01
    linewidth: float = 25.0

    def __post_init__(self):
        if not 0.0 < self.t_in < 1.0:
            raise ParameterError(f"t_in must lie in (0, 1), got {self.t_in!r}")
        for name in ("loss_empty", "loss_cell"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ParameterError(f"{name} must lie in [0, 1), got {v!r}")
        if not 0.0 < self.t_out <= 1.0:
            raise ParameterError(f"t_out must lie in (0, 1], got {self.t_out!r}")
        if not self.linewidth > 0:
            raise ParameterError(f"linewidth must be > 0, got {self.linewidth!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DetectorModel:
    """Additive white Gaussian intensity noise.

    ``sigma0`` is the standard deviation at integration time ``tau0`` (us); the
    variance scales as ``tau0 / t_int``.  ``cavity_factor`` multiplies the
    standard deviation in cavity mode (extra noise from the lock).
    """

    sigma0: float = 0.005
    tau0: float = 5.0
    seed: int = 0
    cavity_factor: float = 1.0

    def __post_init__(self):
        if not self.sigma0 >= 0:
            raise ParameterError(f"sigma0 must be >= 0, got {self.sigma0!r}")
        if not self.tau0 > 0:
            raise ParameterError(f"tau0 must be > 0, got {self.tau0!r}")
        if not self.cavity_factor > 0:
            raise ParameterError(f"cavity_factor must be > 0, got {self.cavity_factor!r}")

    def to_dict(self) -> dict:
        return asdict(self)
