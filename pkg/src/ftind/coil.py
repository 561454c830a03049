"""Closed-form inductance chain for stacked planar spiral coils.

Geometry is stored in millimetres and converted to SI only where a physical
constant is involved (``layer_inductance``). Functions that take a gap accept
scalars or numpy arrays so the synthetic-data path can stay vectorised.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    GeometryError,
    ModelError,
    NonPositiveInnerDiameter,
    SaturationWarning,
)

MU_0 = 4e-7 * math.pi  # H/m
MIL = 0.0254  # mm

COUNT_BITS = 28
COUNT_MAX = (1 << COUNT_BITS) - 1
MID_SCALE = 1 << (COUNT_BITS - 1)

# k(h) = 1 / (a3 h^3 + a2 h^2 + a1 h + a0)
_COUPLING_POLY = (0.184, -0.525, 1.038, 1.001)


@dataclass(frozen=True)
class CoilGeometry:
    """One stacked spiral sensing coil.

    Lengths are in mm. ``outermost_trace_center_diameter`` defaults to
    ``outer_diameter - trace_width`` (centre line of the outermost trace).
    ``layer_gaps[i]`` is the dielectric distance between layer i and i+1,
    counted from the layer nearest the target.
    """

    outer_diameter: float
    turns_per_layer: int
    trace_width: float
    trace_spacing: float
    layer_count: int = 1
    layer_gaps: tuple[float, ...] = ()
    outermost_trace_center_diameter: float | None = None
    copper_weight: float = 1.0  # oz, metadata only

    def __post_init__(self):
        object.__setattr__(self, "layer_gaps", tuple(float(g) for g in self.layer_gaps))
        if self.outermost_trace_center_diameter is None:
            object.__setattr__(
                self, "outermost_trace_center_diameter", self.outer_diameter - self.trace_width
            )
        if not (self.outer_diameter > 0 and self.trace_width > 0 and self.trace_spacing > 0):
            raise GeometryError("outer_diameter, trace_width and trace_spacing must be > 0")
        if int(self.turns_per_layer) != self.turns_per_layer or self.turns_per_layer < 0:
            raise GeometryError("turns_per_layer must be a non-negative integer")
        if int(self.layer_count) != self.layer_count or self.layer_count < 1:
            raise GeometryError("layer_count must be a positive integer")
        if len(self.layer_gaps) != self.layer_count - 1:
            raise GeometryError(
                f"expected {self.layer_count - 1} layer gaps, got {len(self.layer_gaps)}"
            )
        if any(g <= 0 for g in self.layer_gaps):
            raise GeometryError("layer gaps must be > 0")

    @classmethod
    def rectangular(cls, height: float, width: float, **kwargs) -> CoilGeometry:
        """Build a geometry for a rectangular coil via its equal-area circle."""
        return cls(outer_diameter=math.sqrt(height * width * 4.0 / math.pi), **kwargs)

    def validate(self) -> CoilGeometry:
        """Check the derived-diameter invariants; returns self for chaining."""
        d_in = inner_diameter(self)
        d_l = self.outermost_trace_center_diameter
        if not d_in < d_l <= self.outer_diameter:
            raise GeometryError(
                f"need inner diameter ({d_in:.6g}) < d_L ({d_l:.6g}) <= outer diameter "
                f"({self.outer_diameter:.6g})"
            )
        return self

    @property
    def layer_depths(self) -> np.ndarray:
        """Distance (mm) of each layer below the layer nearest the target."""
        return np.concatenate(([0.0], np.cumsum(self.layer_gaps)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_gaps"] = list(self.layer_gaps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CoilGeometry:
        d = dict(d)
        if "height" in d and "width" in d:
            h, w = d.pop("height"), d.pop("width")
            return cls.rectangular(h, w, **d)
        return cls(**d)


@dataclass(frozen=True)
class ResonantCircuit:
    capacitance: float  # F
    parasitic_capacitance: float = 4e-12  # F

    def __post_init__(self):
        if not self.capacitance > 0:
            raise DomainError("capacitance must be > 0")
        if self.parasitic_capacitance < 0:
            raise DomainError("parasitic_capacitance must be >= 0")

    @property
    def total(self) -> float:
        return self.capacitance + self.parasitic_capacitance


@dataclass(frozen=True)
class TargetCoupling:
    gap: float  # mm
    coupling_scale: float = 0.3

    def __post_init__(self):
        if not np.all(np.asarray(self.gap) > 0):
            raise DomainError("target gap must be > 0")
        if not 0.0 <= self.coupling_scale <= 1.0:
            raise DomainError("coupling_scale must lie in [0, 1]")


VERTICAL_COIL = CoilGeometry(
    outer_diameter=10.0,
    turns_per_layer=18,
    trace_width=4 * MIL,
    trace_spacing=4 * MIL,
    layer_count=3,
    layer_gaps=(59 * MIL, 5.9 * MIL),
)

# 4.7 mm x 13 mm rectangle. Only the layer 3-4 gap is published; the outer two
# follow a standard 4-layer 1.6 mm stack-up.
HORIZONTAL_COIL = CoilGeometry.rectangular(
    4.7,
    13.0,
    turns_per_layer=10,
    trace_width=4 * MIL,
    trace_spacing=4 * MIL,
    layer_count=4,
    layer_gaps=(5.9 * MIL, 47.2 * MIL, 5.9 * MIL),
)

PRESETS = {"vertical_coil": VERTICAL_COIL, "horizontal_coil": HORIZONTAL_COIL}


def load_geometry(source: str | Path | dict) -> CoilGeometry:
    """Resolve a preset name, a JSON file path, or a mapping to a geometry."""
    if isinstance(source, dict):
        return CoilGeometry.from_dict(source)
    if isinstance(source, str) and source in PRESETS:
        return PRESETS[source]
    with open(source) as fh:
        return CoilGeometry.from_dict(json.load(fh))


def inner_diameter(g: CoilGeometry) -> float:
    n, s, w = g.turns_per_layer, g.trace_spacing, g.trace_width
    d_in = g.outer_diameter - (2 * n + 1) * s - (2 * n - 1) * w
    if d_in <= 0:
        raise NonPositiveInnerDiameter(
            f"inner diameter {d_in:.6g} mm <= 0: too many turns for the outer diameter"
        )
    return d_in


def average_diameter(g: CoilGeometry) -> float:
    """Winding-corrected mean diameter (mm)."""
    d_in = inner_diameter(g)
    d_out, d_l = g.outer_diameter, g.outermost_trace_center_diameter
    if d_l > d_out:
        raise GeometryError("outermost trace centre diameter exceeds the outer diameter")
    correction = 1.0 + (4.0 / math.pi) * (d_l / d_out - 1.0)
    return correction * (d_in + d_out) / 2.0


def fill_ratio(g: CoilGeometry) -> float:
    d_in = inner_diameter(g)
    return (g.outer_diameter - d_in) / (g.outer_diameter + d_in)


def layer_inductance(g: CoilGeometry) -> float:
    """Self-inductance (H) of one spiral layer."""
    if g.turns_per_layer == 0:
        return 0.0
    alpha = fill_ratio(g)
    if not 0.0 < alpha < 1.0:
        raise GeometryError(f"fill ratio {alpha:.6g} outside (0, 1)")
    d_avg_m = average_diameter(g) * 1e-3
    return 0.5 * MU_0 * g.turns_per_layer**2 * d_avg_m * (
        math.log(2.46 / alpha) + 0.2 * alpha**2
    )


def coupling_factor(h):
    """Magnetic coupling between layers at normalised distance ``h`` (>= 0)."""
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0) or np.any(np.isnan(h_arr)):
        raise DomainError("normalised layer distance must be >= 0")
    a3, a2, a1, a0 = _COUPLING_POLY
    k = 1.0 / (((a3 * h_arr + a2) * h_arr + a1) * h_arr + a0)
    return float(k) if k.ndim == 0 else k


def _coupling_sum(g: CoilGeometry, d_avg: float) -> float:
    if g.layer_count == 1:
        return 0.0
    return float(np.sum(coupling_factor(np.asarray(g.layer_gaps) / d_avg)))


def total_inductance(g: CoilGeometry) -> float:
    """Inductance (H) of the layer stack with no target present."""
    l_layer = layer_inductance(g)
    if l_layer == 0.0:
        return 0.0
    k_sum = _coupling_sum(g, average_diameter(g))
    return (2.0 * k_sum + g.layer_count) * l_layer


def resonant_frequency(inductance: float, rc: ResonantCircuit) -> float:
    if not inductance > 0:
        raise DomainError("inductance must be > 0")
    c = rc.total
    if not c > 0:
        raise DomainError("total capacitance must be > 0")
    return 1.0 / (2.0 * math.pi * math.sqrt(inductance * c))


def target_inductance_drop(g: CoilGeometry, gap, coupling_scale: float):
    """Eddy-current inductance drop (H) for a plate at ``gap`` mm.

    Each layer couples to its mirror image behind the plate, at distance
    ``2 * gap + depth``; the image carries ``coupling_scale`` of the coupling.
    """
    gap = np.asarray(gap, dtype=float)
    if np.any(gap <= 0):
        raise DomainError("target gap must be > 0")
    d_avg = average_diameter(g)
    h = (2.0 * gap[..., None] + g.layer_depths) / d_avg
    drop = layer_inductance(g) * 2.0 * coupling_scale * np.sum(coupling_factor(h), axis=-1)
    return float(drop) if drop.ndim == 0 else drop


def inductance_at_gaps(g: CoilGeometry, gap, coupling_scale: float = 0.3):
    """Vectorised ``inductance_with_target`` over an array of gaps."""
    l_total = total_inductance(g)
    drop = target_inductance_drop(g, gap, coupling_scale)
    if np.any(np.asarray(drop) >= l_total):
        raise ModelError(
            f"coupling_scale={coupling_scale} removes all inductance at the smallest gap"
        )
    return l_total - drop


def inductance_with_target(g: CoilGeometry, t: TargetCoupling) -> float:
    return inductance_at_gaps(g, t.gap, t.coupling_scale)


def raw_counts(inductance, reference_inductance: float, full_scale_counts: int = MID_SCALE):
    """Converter output for ``inductance``, proportional to sqrt(L).

    ``reference_inductance`` (normally the target-free total inductance) maps
    to ``full_scale_counts``. Results are rounded and clamped to the 28-bit
    register; a :class:`SaturationWarning` is issued when clamping occurs.
    """
    l_arr = np.asarray(inductance, dtype=float)
    if np.any(l_arr <= 0):
        raise DomainError("inductance must be > 0")
    if not reference_inductance > 0:
        raise DomainError("reference inductance must be > 0")
    kappa = full_scale_counts / math.sqrt(reference_inductance)
    counts = np.rint(kappa * np.sqrt(l_arr))
    if np.any(counts > COUNT_MAX) or np.any(counts < 0):
        warnings.warn("raw counts clamped to the 28-bit range", SaturationWarning, stacklevel=2)
        counts = np.clip(counts, 0, COUNT_MAX)
    counts = counts.astype(np.int64)
    return int(counts) if counts.ndim == 0 else counts


@dataclass(frozen=True)
class CoilSummary:
    """Derived quantities for one geometry, handy for reports."""

    inner_diameter: float
    average_diameter: float
    fill_ratio: float
    layer_inductance: float
    total_inductance: float
    extra: dict = field(default_factory=dict)


def summarize(g: CoilGeometry, rc: ResonantCircuit | None = None) -> CoilSummary:
    l_total = total_inductance(g)
    extra = {}
    if rc is not None:
        extra["resonant_frequency"] = resonant_frequency(l_total, rc)
    return CoilSummary(
        inner_diameter(g),
        average_diameter(g),
        fill_ratio(g),
        layer_inductance(g),
        l_total,
        extra,
    )
