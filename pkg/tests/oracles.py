"""Independent reference implementations and ground-truth generators for tests."""

from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares

from ftind.calibration import Calibration
from ftind.wrench import FULL_SCALE


def known_calibration(seed: int = 0) -> Calibration:
    """A pole-free ground-truth calibration with mildly nonlinear channels."""
    rng = np.random.default_rng(seed)
    thetas = np.column_stack([
        rng.uniform(-0.3, 0.3, 6),
        rng.uniform(-0.25, 0.25, 6),
        rng.uniform(-0.25, 0.25, 6),
    ])
    a = np.zeros((6, 7))
    a[:, :6] = np.diag(FULL_SCALE) + rng.normal(scale=0.05, size=(6, 6)) * FULL_SCALE[:, None]
    return Calibration(
        thetas=thetas,
        zero_u=np.full(6, 0.5),
        matrix_a=a,
        raw_offset=1.2e8 + 1e6 * np.arange(6),
        raw_scale=np.full(6, 2e6),
    )


def samples_from(cal: Calibration, n: int, seed: int, lo: float = 0.0, hi: float = 1.0):
    """(raw, wrench) pairs; the first row is the zero-load reading."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(lo, hi, (n, 6))
    u[0] = cal.zero_u
    raw = cal.raw_offset + cal.raw_scale * u
    return raw, cal.decode_array(raw, warn=False)


def alternating_fit(raw, wrench, ranges, zero_raw, rounds: int = 30, init=None):
    """Alternate: A by linear LS with the maps fixed, then each channel's
    general rational (gauge-fixed through the zero reading) with A fixed.

    Returns the decoded training series.
    """
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    u = (raw - lo) / (hi - lo)
    u0 = (zero_raw - lo) / (hi - lo)
    w = 1.0 / np.asarray(ranges)
    target = wrench * w

    def channel(p, i):
        d1, d4, d5 = p
        den = d4 * u[:, i] ** 2 + d5 * u[:, i] + 1.0
        den0 = d4 * u0[i] ** 2 + d5 * u0[i] + 1.0
        v = u[:, i] - u0[i]
        return v * (d1 * v + den0) / den

    params = np.zeros((6, 3)) if init is None else np.array(init, dtype=float)

    def features():
        y = np.ones((len(u), 7))
        for i in range(6):
            y[:, i] = channel(params[i], i)
        return y

    for _ in range(rounds):
        y = features()
        aw = np.linalg.lstsq(y, target, rcond=None)[0].T
        for i in range(6):
            rest = y @ aw.T - np.outer(y[:, i], aw[:, i])

            def res(p, i=i, rest=rest, aw=aw):
                return (rest + np.outer(channel(p, i), aw[:, i]) - target).ravel()

            params[i] = least_squares(res, params[i], method="lm", xtol=1e-15, ftol=1e-15,
                                      gtol=1e-15).x
            y[:, i] = channel(params[i], i)
    y = features()
    aw = np.linalg.lstsq(y, target, rcond=None)[0].T
    return (y @ aw.T) / w
