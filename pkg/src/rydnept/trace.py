"""Sweep specification and recorded trace containers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ParameterError

AXES = {
    "coupling_detuning": ("delta_c", "MHz"),
    "mw_amplitude": ("E_mw", "mV/cm"),
}


@dataclass(frozen=True)
class SweepSpec:
    """A linear ramp of one axis.

    ``rate`` is in axis units per us.  With ``stepped=True`` the axis is held
    for ``t_int`` and then jumps by ``rate * t_int`` (a step + dwell pair).
    """

    axis: str = "coupling_detuning"
    start: float = -150.0
    stop: float = -100.0
    rate: float = 0.5
    t_int: float = 0.2
    direction: str | None = None
    seed: int = 0
    stepped: bool = False
    mu0: float = 2938.0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ParameterError(f"unknown sweep axis {self.axis!r}; expected one of {list(AXES)}")
        if self.start == self.stop:
            raise ParameterError("sweep start and stop must differ")
        if not self.rate > 0:
            raise ParameterError(f"rate must be > 0, got {self.rate!r}")
        if not self.t_int > 0:
            raise ParameterError(f"t_int must be > 0, got {self.t_int!r}")
        implied = "up" if self.stop > self.start else "down"
        if self.direction is None:
            object.__setattr__(self, "direction", implied)
        elif self.direction != implied:
            raise ParameterError(f"direction {self.direction!r} contradicts start/stop ({implied})")
        if self.n_points < 2:
            raise ParameterError(f"sweep records only {self.n_points} point(s); need >= 2")

    @classmethod
    def from_total_time(cls, axis, start, stop, total_time, n_points, **kw) -> "SweepSpec":
        """Sweep covering ``[start, stop]`` in ``total_time`` us with ``n_points`` windows."""
        t_int = total_time / n_points
        rate = abs(stop - start) / total_time
        # guard against ceil() rounding up one extra window
        rate *= 1.0 + 1e-12
        return cls(axis=axis, start=start, stop=stop, rate=rate, t_int=t_int, **kw)

    @property
    def n_points(self) -> int:
        return int(math.ceil(abs(self.stop - self.start) / (self.rate * self.t_int) - 1e-9))

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "up" else -1.0

    @property
    def step(self) -> float:
        return self.rate * self.t_int

    @property
    def duration(self) -> float:
        return self.n_points * self.t_int

    def positions(self) -> np.ndarray:
        """Recorded axis positions: window centres (continuous) or plateau values (stepped)."""
        i = np.arange(self.n_points)
        offset = i if self.stepped else i + 0.5
        return self.start + self.sign * self.step * offset

    def value_at(self, t: float) -> float:
        if self.stepped:
            k = min(int(t // self.t_int), self.n_points - 1)
            return self.start + self.sign * self.step * k
        return self.start + self.sign * self.rate * t

    def reversed(self, **changes) -> "SweepSpec":
        kw = self.to_dict()
        kw.update(start=self.stop, stop=self.start, direction=None)
        kw.update(changes)
        return SweepSpec(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trace:
    """Recorded sweep: positions ``x`` and normalized detected intensity ``y``."""

    x: np.ndarray
    y: np.ndarray
    axis: str = "coupling_detuning"
    units: str = "MHz"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.y.shape:
            raise ParameterError("trace x and y must be 1-D arrays of equal length")
        if len(self.x) < 2:
            raise ParameterError("a trace needs at least 2 points")
        d = np.diff(self.x)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ParameterError("trace x must be strictly monotone")

    def __len__(self):
        return len(self.x)

    @property
    def direction(self) -> str:
        return "up" if self.x[-1] > self.x[0] else "down"

    def sorted(self) -> "Trace":
        """Copy with x ascending (analysis helpers expect this)."""
        if self.direction == "up":
            return Trace(self.x.copy(), self.y.copy(), self.axis, self.units, dict(self.meta))
        return Trace(self.x[::-1].copy(), self.y[::-1].copy(), self.axis, self.units,
                     dict(self.meta))

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (self.axis == other.axis and self.units == other.units
                and np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)
                and self.meta == other.meta)
