"""Six per-channel rational maps followed by a 6x7 linear map to the wrench.

Raw counts of channel i are first normalised, ``u = (x - offset) / scale``,
so the calibration range maps onto [0, 1]. The rational map on u is held in
a gauge where ``y(u0) = 0`` and ``y'(u0) = 1`` at the zero-load reading u0:

    y(u) = v * (d1 * v + den(u0)) / den(u),   v = u - u0,
    den(u) = d4 u^2 + d5 u + 1

which removes the offset and scale directions that the matrix A would
otherwise share with each map. Only (d1, d4, d5) per channel are free.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coil import COUNT_MAX, CoilGeometry
from .errors import (
    ChecksumError,
    ExtrapolationWarning,
    InsufficientExcitation,
    PoleError,
    VersionMismatch,
)
from .fitting import (
    Family,
    FitModel,
    LMOptions,
    denominator_roots_in,
    levenberg_marquardt,
)
from .fitting.models import POLE_EPS
from .wrench import AXIS_NAMES, FULL_SCALE, Wrench

log = logging.getLogger(__name__)

FORMAT_NAME = "ftind-calibration"
FORMAT_VERSION = 1
N_CH = 6
N_THETA = 3


def geometry_hash(geometries: Sequence[CoilGeometry]) -> str:
    blob = json.dumps([g.to_dict() for g in geometries], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def gauge_coefficients(theta, u0: float) -> tuple[float, ...]:
    """Full (d1..d5) of a gauge-fixed channel map."""
    d1, d4, d5 = theta
    den0 = (d4 * u0 + d5) * u0 + 1.0
    d2 = den0 - 2.0 * d1 * u0
    d3 = -d1 * u0 * u0 - d2 * u0
    return (d1, d2, d3, d4, d5)


def _channel_eval(theta, u0, u):
    """y and dy/dtheta (n, 3) for one gauge-fixed channel."""
    d1, d4, d5 = theta
    den = (d4 * u + d5) * u + 1.0
    if np.any(np.abs(den) < POLE_EPS):
        raise PoleError("channel map denominator vanishes")
    den0 = (d4 * u0 + d5) * u0 + 1.0
    v = u - u0
    y = v * (d1 * v + den0) / den
    dy = np.column_stack([v * v / den, (v * u0 * u0 - y * u * u) / den, (v * u0 - y * u) / den])
    return y, dy


def _pole_free(theta) -> bool:
    return denominator_roots_in((0.0, 0.0, 0.0, theta[1], theta[2]), 0.0, 1.0).size == 0


@dataclass
class Calibration:
    thetas: np.ndarray  # (6, 3) free gauge parameters (d1, d4, d5)
    zero_u: np.ndarray  # (6,) gauge point in normalised units
    matrix_a: np.ndarray  # (6, 7)
    raw_offset: np.ndarray  # (6,)
    raw_scale: np.ndarray  # (6,)
    geometry_hash: str = ""

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float).reshape(N_CH, N_THETA)
        self.zero_u = np.asarray(self.zero_u, dtype=float).reshape(N_CH)
        self.matrix_a = np.asarray(self.matrix_a, dtype=float).reshape(6, 7)
        self.raw_offset = np.asarray(self.raw_offset, dtype=float).reshape(N_CH)
        self.raw_scale = np.asarray(self.raw_scale, dtype=float).reshape(N_CH)
        if np.any(self.raw_scale == 0):
            raise ValueError("raw_scale entries must be non-zero")

    @property
    def channel_maps(self) -> tuple[FitModel, ...]:
        """Rational maps on normalised input, declared pole-free on [0, 1]."""
        return tuple(
            FitModel(Family.RATIONAL22, gauge_coefficients(t, u0), (0.0, 1.0))
            for t, u0 in zip(self.thetas, self.zero_u)
        )

    def normalise(self, raw) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.raw_offset) / self.raw_scale

    def deformation(self, raw, warn: bool = True) -> np.ndarray:
        """(n, 7) augmented vector [y_1..y_6, 1] for an (n, 6) raw array."""
        u = np.atleast_2d(self.normalise(raw))
        if warn and (np.any(u < -1e-9) or np.any(u > 1 + 1e-9)):
            warnings.warn(
                "raw counts outside the calibrated range", ExtrapolationWarning, stacklevel=3
            )
        y = np.empty((u.shape[0], 7))
        for i in range(N_CH):
            y[:, i] = _channel_eval(self.thetas[i], self.zero_u[i], u[:, i])[0]
        y[:, 6] = 1.0
        return y

    def decode_array(self, raw, warn: bool = True) -> np.ndarray:
        return self.deformation(raw, warn) @ self.matrix_a.T

    def to_dict(self) -> dict:
        return {
            "thetas": self.thetas.tolist(),
            "zero_u": self.zero_u.tolist(),
            "matrix_a": self.matrix_a.tolist(),
            "raw_offset": self.raw_offset.tolist(),
            "raw_scale": self.raw_scale.tolist(),
            "geometry_hash": self.geometry_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Calibration:
        return cls(
            d["thetas"], d["zero_u"], d["matrix_a"], d["raw_offset"], d["raw_scale"],
            d.get("geometry_hash", ""),
        )


def decode(c: Calibration, x_raw) -> Wrench:
    """Wrench for a single six-channel raw reading."""
    return Wrench.from_array(c.decode_array(np.asarray(x_raw).reshape(1, N_CH))[0])


@dataclass
class CalibrationDataset:
    raw: np.ndarray  # (n, 6) counts
    wrench: np.ndarray  # (n, 6) reference
    ranges: np.ndarray = field(default_factory=lambda: FULL_SCALE.copy())
    zero_samples: int = 1  # leading samples that are unloaded

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=float).reshape(-1, N_CH)
        self.wrench = np.asarray(self.wrench, dtype=float).reshape(-1, 6)
        self.ranges = np.asarray(self.ranges, dtype=float)
        if len(self.raw) != len(self.wrench):
            raise ValueError("raw and wrench differ in length")
        if len(self.raw) < 7:
            raise ValueError("at least 7 samples are needed")
        if np.any(self.raw < 0) or np.any(self.raw > COUNT_MAX):
            raise ValueError("raw values outside the 28-bit range")
        if not 1 <= self.zero_samples <= len(self.raw):
            raise ValueError("zero_samples must select at least one sample")

    @classmethod
    def from_dataset(cls, ds, ranges=FULL_SCALE, zero_samples: int = 1) -> CalibrationDataset:
        return cls(ds.counts, ds.wrench, ranges, zero_samples)

    def zero_raw(self) -> np.ndarray:
        return np.median(self.raw[: self.zero_samples], axis=0)


@dataclass
class CalibrationOptions:
    rounds: int = 2  # alternating seeding rounds
    excitation_fraction: float = 0.1  # of half range, per axis
    lm: LMOptions = field(default_factory=lambda: LMOptions(max_iters=200))
    channel_lm: LMOptions = field(default_factory=lambda: LMOptions(max_iters=50))


@dataclass
class CalReport:
    rmse: list[float]
    fs_error_max_pct: list[float]
    fs_error_mean_pct: list[float]
    iterations: int
    converged: bool
    cost: float

    def to_dict(self) -> dict:
        return {
            "rmse": dict(zip(AXIS_NAMES, self.rmse)),
            "fs_error_max_pct": dict(zip(AXIS_NAMES, self.fs_error_max_pct)),
            "fs_error_mean_pct": dict(zip(AXIS_NAMES, self.fs_error_mean_pct)),
            "iterations": self.iterations,
            "converged": self.converged,
            "cost": self.cost,
        }


class _Problem:
    """Weighted residual ``(A @ y(u; theta) - F) / range`` and its jacobian."""

    def __init__(self, u, zero_u, wrench, ranges):
        self.u = u
        self.zero_u = zero_u
        self.w = 1.0 / ranges
        self.target = wrench * self.w
        self.n = len(u)

    def features(self, thetas):
        y = np.empty((self.n, 7))
        dys = []
        for i in range(N_CH):
            y[:, i], dy = _channel_eval(thetas[i], self.zero_u[i], self.u[:, i])
            dys.append(dy)
        y[:, 6] = 1.0
        return y, dys

    def solve_a(self, thetas):
        y, _ = self.features(thetas)
        a_w = np.linalg.lstsq(y, self.target, rcond=None)[0].T
        return a_w / self.w[:, None]

    # joint parameter vector: [thetas.ravel() (18), A.ravel() (42)]
    def split(self, p):
        return p[: N_CH * N_THETA].reshape(N_CH, N_THETA), p[N_CH * N_THETA :].reshape(6, 7)

    def residual(self, p):
        thetas, a = self.split(p)
        if not all(_pole_free(t) for t in thetas):
            return np.full(self.n * 6, np.inf)
        try:
            y, _ = self.features(thetas)
        except PoleError:
            return np.full(self.n * 6, np.inf)
        return ((y @ a.T) * self.w - self.target).ravel()

    def jacobian(self, p):
        thetas, a = self.split(p)
        y, dys = self.features(thetas)
        aw = a * self.w[:, None]
        J = np.zeros((self.n, 6, N_CH * N_THETA + 42))
        for i in range(N_CH):
            J[:, :, i * N_THETA : (i + 1) * N_THETA] = aw[None, :, i, None] * dys[i][:, None, :]
        base = N_CH * N_THETA
        for k in range(6):
            J[:, k, base + 7 * k : base + 7 * (k + 1)] = y * self.w[k]
        return J.reshape(self.n * 6, -1)

    def channel_step(self, thetas, a, i, opts):
        """Refit channel i's theta with A and the other channels held fixed."""
        y, _ = self.features(thetas)
        aw = a * self.w[:, None]
        rest = y @ aw.T - np.outer(y[:, i], aw[:, i])

        def res(t):
            if not _pole_free(t):
                return np.full(self.n * 6, np.inf)
            try:
                yi, _ = _channel_eval(t, self.zero_u[i], self.u[:, i])
            except PoleError:
                return np.full(self.n * 6, np.inf)
            return (rest + np.outer(yi, aw[:, i]) - self.target).ravel()

        def jac(t):
            _, dy = _channel_eval(t, self.zero_u[i], self.u[:, i])
            return (aw[None, :, i, None] * dy[:, None, :]).reshape(self.n * 6, N_THETA)

        return levenberg_marquardt(res, jac, thetas[i], opts).params


def check_excitation(ds: CalibrationDataset, fraction: float) -> None:
    peak = np.max(np.abs(ds.wrench), axis=0)
    weak = [AXIS_NAMES[j] for j in range(6) if peak[j] < fraction * ds.ranges[j] / 2]
    if weak:
        raise InsufficientExcitation(f"axes not excited enough for calibration: {weak}")


def calibrate(
    ds: CalibrationDataset,
    options: CalibrationOptions | None = None,
    geometries: Sequence[CoilGeometry] | None = None,
) -> tuple[Calibration, CalReport]:
    """Jointly fit the channel maps and the 6x7 matrix to reference wrenches.

    Seeded with linear maps and ``rounds`` of alternating refinement (solve
    A by linear least squares, then refit each channel with A fixed), then
    finished by Levenberg-Marquardt over all parameters together.
    """
    opts = options or CalibrationOptions()
    check_excitation(ds, opts.excitation_fraction)
    lo, hi = ds.raw.min(axis=0), ds.raw.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    offset = lo
    u = (ds.raw - offset) / span
    zero_u = (ds.zero_raw() - offset) / span
    prob = _Problem(u, zero_u, ds.wrench, ds.ranges)

    thetas = np.zeros((N_CH, N_THETA))
    a = prob.solve_a(thetas)
    for _ in range(opts.rounds):
        for i in range(N_CH):
            thetas[i] = prob.channel_step(thetas, a, i, opts.channel_lm)
        a = prob.solve_a(thetas)

    p0 = np.concatenate([thetas.ravel(), a.ravel()])
    result = levenberg_marquardt(prob.residual, prob.jacobian, p0, opts.lm)
    thetas, a = prob.split(result.params)
    log.info("calibration: %d LM iterations, cost %.3e", result.iterations, result.cost)

    cal = Calibration(
        thetas, zero_u, a, offset, span, geometry_hash(geometries) if geometries else ""
    )
    cal.channel_maps  # raises PoleError if a denominator root entered [0, 1]
    pred = cal.decode_array(ds.raw, warn=False)
    err = pred - ds.wrench
    pct = 100.0 * np.abs(err) / ds.ranges
    report = CalReport(
        rmse=np.sqrt(np.mean(err**2, axis=0)).tolist(),
        fs_error_max_pct=pct.max(axis=0).tolist(),
        fs_error_mean_pct=pct.mean(axis=0).tolist(),
        iterations=result.iterations,
        converged=result.converged,
        cost=result.cost,
    )
    return cal, report


def _checksum(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def save_calibration(c: Calibration, path) -> None:
    payload = c.to_dict()
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "geometry_hash": c.geometry_hash,
        "payload": payload,
        "checksum": _checksum(payload),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_calibration(
    path, expected_geometry_hash: str | None = None, allow_geometry_mismatch: bool = False
) -> Calibration:
    """Load and verify a calibration file.

    Raises :class:`ChecksumError` for unreadable or altered files and
    :class:`VersionMismatch` for a different format version or, unless
    ``allow_geometry_mismatch``, a different coil-geometry hash.
    """
    try:
        doc = json.loads(Path(path).read_text())
        payload = doc["payload"]
        stored = doc["checksum"]
    except (json.JSONDecodeError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise ChecksumError(f"calibration file {path} is corrupt or truncated") from exc
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise VersionMismatch(
            f"unsupported calibration format {doc.get('format')!r} v{doc.get('version')}"
        )
    if _checksum(payload) != stored:
        raise ChecksumError(f"calibration file {path} failed its checksum")
    cal = Calibration.from_dict(payload)
    if (
        expected_geometry_hash is not None
        and cal.geometry_hash != expected_geometry_hash
        and not allow_geometry_mismatch
    ):
        raise VersionMismatch(
            f"calibration was made for geometry {cal.geometry_hash}, "
            f"not {expected_geometry_hash}"
        )
    return cal
