"""Accuracy, resolution and crosstalk metrics against a reference sensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWindow, DomainError, LengthMismatch, MissingRun
from .wrench import AXIS_NAMES, FULL_SCALE


@dataclass(frozen=True)
class AxisRanges:
    spans: tuple[float, ...] = tuple(FULL_SCALE.tolist())

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(float(s) for s in self.spans))
        if len(self.spans) != 6 or any(s <= 0 for s in self.spans):
            raise ValueError("need six positive full-scale spans")

    def as_array(self) -> np.ndarray:
        return np.array(self.spans)


@dataclass
class AxisError:
    mean_pct: float
    std_pct: float
    max_pct: float
    rmse: float


def full_scale_error(test, ref, ranges: AxisRanges | None = None) -> list[AxisError]:
    """Per-axis statistics of ``100 * |test - ref| / span``, plus RMSE in native units."""
    test = np.asarray(test, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if test.shape != ref.shape:
        raise LengthMismatch(f"test {test.shape} and reference {ref.shape} differ")
    spans = (ranges or AxisRanges()).as_array()
    diff = test - ref
    pct = 100.0 * np.abs(diff) / spans
    rmse = np.sqrt(np.mean(diff**2, axis=0))
    return [
        AxisError(float(pct[:, j].mean()), float(pct[:, j].std()), float(pct[:, j].max()),
                  float(rmse[j]))
        for j in range(test.shape[1])
    ]


def align_series(t_test, test, t_ref, ref, max_skew_us: int = 1000):
    """Nearest-timestamp join; keeps test samples with a reference within ``max_skew_us``."""
    t_test = np.asarray(t_test, dtype=np.int64)
    t_ref = np.asarray(t_ref, dtype=np.int64)
    order = np.argsort(t_ref, kind="stable")
    t_sorted = t_ref[order]
    idx = np.clip(np.searchsorted(t_sorted, t_test), 1, len(t_sorted) - 1)
    left, right = t_sorted[idx - 1], t_sorted[idx]
    pick = np.where(np.abs(t_test - left) <= np.abs(right - t_test), idx - 1, idx)
    skew = np.abs(t_sorted[pick] - t_test)
    keep = skew <= max_skew_us
    return np.asarray(test)[keep], np.asarray(ref)[order[pick[keep]]]


def resolution_from_noise(series, sigma_multiplier: float = 3.0) -> np.ndarray:
    """``sigma_multiplier`` times the per-axis sample standard deviation of a static window."""
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    if series.shape[0] < 2:
        raise DegenerateWindow("need at least two samples in the noise window")
    if not sigma_multiplier > 0:
        raise DomainError("sigma_multiplier must be > 0")
    return sigma_multiplier * series.std(axis=0, ddof=1)


def implied_sigma_multiplier(resolution, std) -> np.ndarray:
    """The multiplier that would turn ``std`` into ``resolution``."""
    return np.asarray(resolution, dtype=float) / np.asarray(std, dtype=float)


def quantization_levels(span: float, resolution: float) -> int:
    if not (span > 0 and resolution > 0):
        raise DomainError("span and resolution must both be > 0")
    # guard exact ratios against a representation error just below the integer
    return math.floor(span / resolution * (1 + 1e-12))


def crosstalk_matrix(runs, ranges: AxisRanges | None = None, baseline=None) -> np.ndarray:
    """6x6 percentage matrix; row i is the run exciting axis i.

    ``runs`` maps excited-axis index to an (n, 6) output series. The response
    on axis j is the peak absolute deviation from ``baseline`` (default zero,
    i.e. a tared sensor), as a fraction of span j. Each row is divided by its
    own diagonal fraction, so the diagonal is exactly 100 and off-diagonals
    read as "percent of full scale per full-scale excitation".
    """
    spans = (ranges or AxisRanges()).as_array()
    base = np.zeros(6) if baseline is None else np.asarray(baseline, dtype=float)
    out = np.zeros((6, 6))
    for i in range(6):
        if i not in runs:
            raise MissingRun(f"no excitation run for axis {AXIS_NAMES[i]}")
        series = np.asarray(runs[i], dtype=float)
        frac = np.max(np.abs(series - base), axis=0) / spans
        if frac[i] == 0:
            raise DegenerateWindow(f"axis {AXIS_NAMES[i]} shows no response to its own run")
        out[i] = 100.0 * frac / frac[i]
        out[i, i] = 100.0
    return out


def single_axis_segments(ref, threshold: float = 0.05, ranges: AxisRanges | None = None):
    """Sample indices per axis where only that axis is loaded above
    ``threshold`` of its half span (others below it)."""
    spans = (ranges or AxisRanges()).as_array()
    loaded = np.abs(np.asarray(ref, dtype=float)) > threshold * spans / 2
    single = loaded.sum(axis=1) == 1
    return {i: np.flatnonzero(single & loaded[:, i]) for i in range(6)}


@dataclass
class EvalReport:
    errors: list[AxisError]
    std: list[float]
    resolution: list[float]
    quantization_levels: list[int | None]  # None where the window shows no noise
    crosstalk: np.ndarray | None  # None without single-axis runs for every axis
    sigma_multiplier: float = 3.0
    spans: list[float] = field(default_factory=lambda: FULL_SCALE.tolist())

    def to_dict(self) -> dict:
        return {
            "axes": list(AXIS_NAMES),
            "spans": list(self.spans),
            "sigma_multiplier": self.sigma_multiplier,
            "full_scale_error": [vars(e) for e in self.errors],
            "std": list(self.std),
            "resolution": list(self.resolution),
            "quantization_levels": list(self.quantization_levels),
            "crosstalk": None if self.crosstalk is None else np.asarray(self.crosstalk).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(
            errors=[AxisError(**e) for e in d["full_scale_error"]],
            std=d["std"],
            resolution=d["resolution"],
            quantization_levels=d["quantization_levels"],
            crosstalk=None if d["crosstalk"] is None else np.array(d["crosstalk"]),
            sigma_multiplier=d["sigma_multiplier"],
            spans=d["spans"],
        )


def evaluate(
    test,
    ref,
    noise_window,
    ranges: AxisRanges | None = None,
    sigma_multiplier: float = 3.0,
    crosstalk_threshold: float = 0.05,
) -> EvalReport:
    """Full evaluation of an aligned decoded/reference pair.

    ``noise_window`` is the decoded output over a static interval.
    Crosstalk uses the samples where the reference loads a single axis;
    off-axis entries there are decoded minus reference.
    """
    ranges = ranges or AxisRanges()
    test = np.asarray(test, dtype=float)
    errors = full_scale_error(test, ref, ranges)
    noise_window = np.asarray(noise_window, dtype=float)
    std = noise_window.std(axis=0, ddof=1)
    res = resolution_from_noise(noise_window, sigma_multiplier)
    spans = ranges.as_array()
    levels = [quantization_levels(spans[j], res[j]) if res[j] > 0 else None for j in range(6)]
    segments = single_axis_segments(ref, crosstalk_threshold, ranges)
    # off-axis response is measured against the reference, so small real
    # loads below the threshold are not counted as crosstalk
    resid = test - np.asarray(ref, dtype=float)
    runs = {}
    for i, idx in segments.items():
        if idx.size:
            run = resid[idx].copy()
            run[:, i] = test[idx, i]
            runs[i] = run
    xtalk = crosstalk_matrix(runs, ranges) if len(runs) == 6 else None
    return EvalReport(errors, std.tolist(), res.tolist(), levels, xtalk, sigma_multiplier,
                      spans.tolist())
