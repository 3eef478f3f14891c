"""Spatially uniform advecting velocity fields."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class FlowField:
    """Divergence-free velocity, uniform in space.

    ``kind="constant"`` returns ``velocity`` at all times.  ``kind="harmonic"``
    evaluates, per component ``c``::

        mu_c(t) = amplitude[c] * sin(phase[c] - rate[c] * t)
    """

    kind: str = "constant"
    velocity: tuple[float, float] = (0.0, 0.0)
    amplitude: tuple[float, float] = (0.0, 0.0)
    phase: tuple[float, float] = (0.0, 0.0)
    rate: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("constant", "harmonic"):
            raise ConfigError(f"unknown flow kind {self.kind!r}")

    @classmethod
    def constant(cls, vx: float, vy: float) -> "FlowField":
        return cls("constant", velocity=(float(vx), float(vy)))

    @classmethod
    def harmonic(cls, amplitude, phase, rate) -> "FlowField":
        return cls("harmonic", amplitude=tuple(map(float, amplitude)),
                   phase=tuple(map(float, phase)), rate=tuple(map(float, rate)))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def velocity_at(self, t: float) -> np.ndarray:
        if self.kind == "constant":
            return np.array(self.velocity, dtype=float)
        return np.array([a * math.sin(p - r * t)
                         for a, p, r in zip(self.amplitude, self.phase, self.rate)])

    def displacement(self, t: float) -> np.ndarray:
        """Closed-form integral of the velocity over ``[0, t]``."""
        if self.kind == "constant":
            return np.array(self.velocity, dtype=float) * t
        out = []
        for a, p, r in zip(self.amplitude, self.phase, self.rate):
            if r == 0.0:
                out.append(a * math.sin(p) * t)
            else:
                out.append(a / r * (math.cos(p - r * t) - math.cos(p)))
        return np.array(out)


def flow_at(field: FlowField, x, y, t: float) -> np.ndarray:
    """Velocity at points ``(x, y)``; result has shape ``np.shape(x) + (2,)``."""
    x = np.asarray(x, dtype=float)
    v = field.velocity_at(t)
    return np.broadcast_to(v, x.shape + (2,)).copy()
