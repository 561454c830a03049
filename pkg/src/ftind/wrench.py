"""Six-axis wrench value type and the sensor's rated ranges."""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

AXIS_NAMES = ("fx", "fy", "fz", "tx", "ty", "tz")

# Symmetric rated limits (N, N*m); full-scale spans are twice these.
HALF_RANGES = np.array([890.0, 890.0, 1435.0, 27.0, 27.0, 45.0])
FULL_SCALE = 2.0 * HALF_RANGES


@dataclass(frozen=True)
class Wrench:
    fx: float = 0.0
    fy: float = 0.0
    fz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> Wrench:
        values = np.asarray(values, dtype=float)
        if values.shape != (6,):
            raise ValueError("a wrench needs exactly six components")
        return cls(*(float(v) for v in values))

    @classmethod
    def axis(cls, index: int, value: float) -> Wrench:
        """A wrench loading a single axis."""
        values = np.zeros(6)
        values[index] = value
        return cls.from_array(values)

    def in_range(self, half_ranges=HALF_RANGES) -> bool:
        return bool(np.all(np.abs(self.as_array()) <= np.asarray(half_ranges)))

    def __add__(self, other: Wrench) -> Wrench:
        return Wrench.from_array(self.as_array() + other.as_array())

    def __mul__(self, scale: float) -> Wrench:
        return Wrench.from_array(self.as_array() * scale)

    __rmul__ = __mul__
