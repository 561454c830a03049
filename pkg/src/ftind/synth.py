"""Digital twin: wrench -> plate twist -> coil gaps -> inductance -> raw counts.

The elastomer is reduced to a 6x6 compliance matrix acting on a rigid plate.
Default stiffnesses are engineering choices (the sensor's published data give
beam dimensions, not stiffnesses): each axis at its rated limit moves the
most-affected coil gap by 10 % of nominal.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from . import coil
from .coil import HORIZONTAL_COIL, MID_SCALE, VERTICAL_COIL, CoilGeometry
from .errors import DomainError, PlateContact, RateError
from .wrench import AXIS_NAMES, FULL_SCALE, HALF_RANGES, Wrench

MAX_RATE_HZ = 4080.0
CHANNELS = 6
CSV_HEADER = ["t_us", *AXIS_NAMES, *(f"ch{i}" for i in range(CHANNELS))]


@dataclass(frozen=True)
class CoilSite:
    position: tuple[float, float, float]  # mm, plate frame
    sensing_axis: tuple[float, float, float]  # unit; displacement along it closes the gap
    nominal_gap: float  # mm

    def __post_init__(self):
        axis = np.asarray(self.sensing_axis, dtype=float)
        if not math.isclose(float(np.linalg.norm(axis)), 1.0, rel_tol=1e-9):
            raise ValueError("sensing_axis must be a unit vector")
        if not self.nominal_gap > 0:
            raise ValueError("nominal_gap must be > 0")


@dataclass(frozen=True)
class PlateKinematics:
    compliance: np.ndarray  # (6, 6): wrench [N, N*m] -> twist [m, rad]
    coil_sites: tuple[CoilSite, ...]

    def __post_init__(self):
        c = np.array(self.compliance, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "compliance", c)
        object.__setattr__(self, "coil_sites", tuple(self.coil_sites))
        if c.shape != (6, 6):
            raise ValueError("compliance must be 6x6")
        if not np.allclose(c, c.T, rtol=1e-12, atol=0.0):
            raise ValueError("compliance must be symmetric")
        if np.linalg.eigvalsh(c).min() <= 0:
            raise ValueError("compliance must be positive definite")
        if len(self.coil_sites) != CHANNELS:
            raise ValueError("exactly six coil sites are required")

    @property
    def nominal_gaps(self) -> np.ndarray:
        return np.array([s.nominal_gap for s in self.coil_sites])

    def projection(self) -> np.ndarray:
        """(6, 6) map from twist (m, rad) to gap closure (mm) at each site."""
        rows = []
        for site in self.coil_sites:
            a = np.asarray(site.sensing_axis, dtype=float)
            p = np.asarray(site.position, dtype=float)
            rows.append(np.concatenate([1000.0 * a, np.cross(p, a)]))
        return np.array(rows)

    def gap_gain(self) -> np.ndarray:
        """(6, 6) map from wrench to gap closure (mm)."""
        return self.projection() @ self.compliance

    def to_dict(self) -> dict:
        return {
            "compliance": self.compliance.tolist(),
            "coil_sites": [
                {
                    "position": list(s.position),
                    "sensing_axis": list(s.sensing_axis),
                    "nominal_gap": s.nominal_gap,
                }
                for s in self.coil_sites
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> PlateKinematics:
        sites = [
            CoilSite(tuple(s["position"]), tuple(s["sensing_axis"]), float(s["nominal_gap"]))
            for s in d["coil_sites"]
        ]
        return cls(np.array(d["compliance"], dtype=float), tuple(sites))


def default_sites(
    vertical_radius: float = 20.0,
    horizontal_radius: float = 25.0,
    vertical_gap: float = 1.0,
    horizontal_gap: float = 1.0,
) -> tuple[CoilSite, ...]:
    """Three z-sensing coils at 0/120/240 deg, three tangential coils at 60/180/300 deg."""
    sites = []
    for deg in (0.0, 120.0, 240.0):
        phi = math.radians(deg)
        pos = (vertical_radius * math.cos(phi), vertical_radius * math.sin(phi), 0.0)
        sites.append(CoilSite(pos, (0.0, 0.0, 1.0), vertical_gap))
    for deg in (60.0, 180.0, 300.0):
        phi = math.radians(deg)
        pos = (horizontal_radius * math.cos(phi), horizontal_radius * math.sin(phi), 0.0)
        sites.append(CoilSite(pos, (-math.sin(phi), math.cos(phi), 0.0), horizontal_gap))
    return tuple(sites)


def default_kinematics(gap_fraction: float = 0.1, **site_kwargs) -> PlateKinematics:
    """Diagonal compliance: each axis at its rated limit closes the most
    sensitive gap by ``gap_fraction`` of that gap."""
    sites = default_sites(**site_kwargs)
    proj = PlateKinematics(np.eye(6), sites).projection()
    gaps = np.array([s.nominal_gap for s in sites])
    diag = np.empty(6)
    for j in range(6):
        col = np.abs(proj[:, j])
        i = int(np.argmax(col / gaps))
        diag[j] = gap_fraction * gaps[i] / (col[i] * HALF_RANGES[j])
    return PlateKinematics(np.diag(diag), sites)


def inject_coupling(
    pk: PlateKinematics,
    excited: int,
    responding: int,
    pct: float,
    ranges=FULL_SCALE,
) -> PlateKinematics:
    """Add symmetric compliance coupling between two axes.

    Sized so a decoder built for ``pk`` reports a ``responding``-axis output
    of ``pct`` % of its full scale when ``excited`` is loaded to its own full
    scale. ``pk`` must have a diagonal compliance.
    """
    c = np.array(pk.compliance)
    if np.count_nonzero(c - np.diag(np.diag(c))):
        raise ValueError("inject_coupling expects a diagonal compliance")
    ranges = np.asarray(ranges, dtype=float)
    value = pct / 100.0 * ranges[responding] / ranges[excited] * c[responding, responding]
    c[responding, excited] = c[excited, responding] = value
    return replace(pk, compliance=c)


def gaps_from_wrench(w, pk: PlateKinematics) -> np.ndarray:
    """Coil gaps (mm) for one wrench, or an (n, 6) array of wrenches."""
    w_arr = w.as_array() if isinstance(w, Wrench) else np.asarray(w, dtype=float)
    gaps = pk.nominal_gaps - w_arr @ pk.gap_gain().T
    if np.any(gaps <= 0):
        raise PlateContact("applied wrench closes a coil gap (overload)")
    return gaps


@dataclass(frozen=True)
class NoiseModel:
    count_sigma: float = 0.0
    drift_per_second: float = 0.0

    def __post_init__(self):
        if self.count_sigma < 0:
            raise ValueError("count_sigma must be >= 0")


@dataclass
class SensorModel:
    """Everything needed to turn gaps into counts, one geometry per channel."""

    kinematics: PlateKinematics = field(default_factory=default_kinematics)
    geometries: tuple[CoilGeometry, ...] = (VERTICAL_COIL,) * 3 + (HORIZONTAL_COIL,) * 3
    coupling_scale: float = 0.3
    full_scale_counts: int = MID_SCALE

    def __post_init__(self):
        self.geometries = tuple(self.geometries)
        if len(self.geometries) != CHANNELS:
            raise ValueError("one geometry per channel is required")
        self._l_ref = np.array([coil.total_inductance(g) for g in self.geometries])

    def inductances(self, gaps: np.ndarray) -> np.ndarray:
        gaps = np.atleast_2d(gaps)
        return np.column_stack(
            [
                coil.inductance_at_gaps(g, gaps[:, i], self.coupling_scale)
                for i, g in enumerate(self.geometries)
            ]
        )

    def ideal_counts(self, wrenches) -> np.ndarray:
        """Noise-free, unrounded counts for an (n, 6) wrench array."""
        gaps = gaps_from_wrench(np.atleast_2d(wrenches), self.kinematics)
        kappa = self.full_scale_counts / np.sqrt(self._l_ref)
        return kappa * np.sqrt(self.inductances(gaps))

    def counts(self, wrenches) -> np.ndarray:
        gaps = gaps_from_wrench(np.atleast_2d(wrenches), self.kinematics)
        ind = self.inductances(gaps)
        return np.column_stack(
            [
                coil.raw_counts(ind[:, i], self._l_ref[i], self.full_scale_counts)
                for i in range(CHANNELS)
            ]
        )

    def sensitivity(self, at=None, step: float = 1e-3) -> np.ndarray:
        """d counts / d wrench (6x6) by central differences at wrench ``at``."""
        base = np.zeros(6) if at is None else np.asarray(at, dtype=float)
        cols = []
        for j in range(6):
            h = step * HALF_RANGES[j]
            e = np.zeros(6)
            e[j] = h
            cols.append((self.ideal_counts(base + e)[0] - self.ideal_counts(base - e)[0]) / (2 * h))
        return np.column_stack(cols)

    def count_sigma_for_output(self, axis: int, output_sigma: float) -> float:
        """Raw-count noise that propagates to ``output_sigma`` on ``axis`` under
        an exact linear inverse at zero load."""
        inv = np.linalg.inv(self.sensitivity())
        return float(output_sigma / np.linalg.norm(inv[axis]))


@dataclass
class Dataset:
    t_us: np.ndarray  # int64 microseconds
    wrench: np.ndarray  # (n, 6)
    counts: np.ndarray  # (n, 6) int64

    def __post_init__(self):
        self.t_us = np.asarray(self.t_us, dtype=np.int64)
        self.wrench = np.asarray(self.wrench, dtype=float).reshape(-1, 6)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1, CHANNELS)
        if not len(self.t_us) == len(self.wrench) == len(self.counts):
            raise ValueError("dataset columns differ in length")

    def __len__(self) -> int:
        return len(self.t_us)

    def __getitem__(self, idx) -> Dataset:
        return Dataset(self.t_us[idx], self.wrench[idx], self.counts[idx])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for t, w, c in zip(self.t_us.tolist(), self.wrench.tolist(), self.counts.tolist()):
                writer.writerow([t, *map(repr, w), *c])

    def equals(self, other: Dataset) -> bool:
        return (
            np.array_equal(self.t_us, other.t_us)
            and np.array_equal(self.wrench, other.wrench)
            and np.array_equal(self.counts, other.counts)
        )


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream: reproducible bit-for-bit across platforms for a given numpy."""
    return np.random.Generator(np.random.PCG64(seed))


def generate_dataset(
    wrench_schedule,
    model: SensorModel | None = None,
    noise: NoiseModel | None = None,
    rate: float = 1000.0,
    seed: int = 0,
    start_us: int = 0,
) -> Dataset:
    """Sample the twin once per scheduled wrench at ``rate`` Hz."""
    if not 0 < rate <= MAX_RATE_HZ:
        raise RateError(f"rate {rate} Hz outside (0, {MAX_RATE_HZ:g}]")
    model = model or SensorModel()
    noise = noise or NoiseModel()
    if isinstance(wrench_schedule, np.ndarray):
        wrenches = np.asarray(wrench_schedule, dtype=float).reshape(-1, 6)
    else:
        wrenches = np.array([w.as_array() for w in wrench_schedule]).reshape(-1, 6)
    n = len(wrenches)
    t_us = start_us + np.rint(np.arange(n) * (1e6 / rate)).astype(np.int64)
    counts = model.counts(wrenches)
    perturb = np.zeros((n, CHANNELS))
    perturb += (noise.drift_per_second * (t_us - start_us) * 1e-6)[:, None]
    if noise.count_sigma > 0:
        perturb += noise.count_sigma * make_rng(seed).standard_normal((n, CHANNELS))
    counts = np.clip(counts + np.rint(perturb).astype(np.int64), 0, coil.COUNT_MAX)
    return Dataset(t_us, wrenches, counts)


# --- wrench schedules -------------------------------------------------------


@dataclass(frozen=True)
class Keyframe:
    t: float  # s
    wrench: Wrench


def sample_schedule(keyframes: Sequence[Keyframe], rate: float) -> np.ndarray:
    """Piecewise-linear interpolation of keyframes at ``rate`` Hz -> (n, 6)."""
    if len(keyframes) < 2:
        raise ValueError("a schedule needs at least two keyframes")
    times = np.array([k.t for k in keyframes])
    if np.any(np.diff(times) < 0):
        raise ValueError("keyframe times must be non-decreasing")
    values = np.array([k.wrench.as_array() for k in keyframes])
    n = math.floor((times[-1] - times[0]) * rate + 1e-9) + 1
    t = times[0] + np.arange(n) / rate
    return np.column_stack([np.interp(t, times, values[:, j]) for j in range(6)])


def load_schedule(path) -> list[Keyframe]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"t_s", *AXIS_NAMES} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"schedule file lacks columns: {sorted(missing)}")
        return [
            Keyframe(float(row["t_s"]), Wrench(*(float(row[a]) for a in AXIS_NAMES)))
            for row in reader
        ]


def save_schedule(keyframes: Sequence[Keyframe], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_s", *AXIS_NAMES])
        for k in keyframes:
            writer.writerow([repr(k.t), *map(repr, k.wrench.as_array().tolist())])


def axis_sweep(axis: int, amplitude: float, t0: float, ramp: float) -> list[Keyframe]:
    """Triangle 0 -> +A -> -A -> 0 on one axis, each leg ``ramp`` seconds."""
    return [
        Keyframe(t0, Wrench()),
        Keyframe(t0 + ramp, Wrench.axis(axis, amplitude)),
        Keyframe(t0 + 3 * ramp, Wrench.axis(axis, -amplitude)),
        Keyframe(t0 + 4 * ramp, Wrench()),
    ]


def demo_schedule(
    load_fraction: float = 0.9,
    ramp: float = 0.25,
    rest: float = 0.5,
    combined: int = 24,
    seed: int = 7,
    lead: float | None = None,
) -> list[Keyframe]:
    """Rest (``lead`` s, default ``rest``), per-axis triangle sweeps, then
    random multi-axis keyframes, rest."""
    frames = [Keyframe(0.0, Wrench())]
    t = rest if lead is None else lead
    for axis in range(6):
        frames += axis_sweep(axis, load_fraction * HALF_RANGES[axis], t, ramp)
        t += 4 * ramp + rest
        frames.append(Keyframe(t, Wrench()))
    rng = make_rng(seed)
    # keep simultaneous loads inside the per-axis rating and away from contact
    for _ in range(combined):
        t += ramp
        frames.append(
            Keyframe(t, Wrench.from_array(rng.uniform(-0.5, 0.5, 6) * load_fraction * HALF_RANGES))
        )
    t += ramp
    frames.append(Keyframe(t, Wrench()))
    frames.append(Keyframe(t + rest, Wrench()))
    return frames


def sqrt_inductance_curve(
    geometry: CoilGeometry = VERTICAL_COIL,
    d_min: float = 0.01,
    d_max: float = 3.0,
    n: int = 200,
    coupling_scale: float = 0.3,
) -> tuple[np.ndarray, np.ndarray]:
    """(sqrt(L / L_total), gap in mm) for gaps spanning d/D_avg in [d_min, d_max]."""
    if not 0 < d_min < d_max:
        raise DomainError("need 0 < d_min < d_max")
    d_avg = coil.average_diameter(geometry)
    gaps = np.linspace(d_min * d_avg, d_max * d_avg, n)
    ind = coil.inductance_at_gaps(geometry, gaps, coupling_scale)
    return np.sqrt(ind / coil.total_inductance(geometry)), gaps
