"""Curve fitting driver: seeding, x pre-scaling, LM, pole guard."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateData, PoleError
from .models import (
    Family,
    FitModel,
    denominator_roots_in,
    evaluate,
    jacobian,
    rescale_coefficients,
)
from .quality import FitReport, fit_metrics
from .solver import LMOptions, levenberg_marquardt


def initial_coefficients(family: Family, u, y) -> np.ndarray:
    """Deterministic seed for ``family`` on data with inputs already in [0, 1]."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if family is Family.POLYNOMIAL4:
        return np.linalg.lstsq(np.vander(u, 5, increasing=True), y, rcond=None)[0]
    if family is Family.RATIONAL22:
        # y * (d4 u^2 + d5 u + 1) = d1 u^2 + d2 u + d3, linear in d
        A = np.column_stack([u * u, u, np.ones_like(u), -y * u * u, -y * u])
        return np.linalg.lstsq(A, y, rcond=None)[0]
    span = float(np.ptp(y)) or 1.0
    q1, q2 = np.quantile(u, [1 / 3, 2 / 3])
    if family is Family.SIGMOID_SUM:
        slope = 10.0 if np.corrcoef(u, y)[0, 1] >= 0 else -10.0
        return np.array([span / 2, slope, q1, span / 2, slope, q2])
    return np.array([span / 2, q1, 1 / 3, span / 2, q2, 1 / 3])


def _fallback_rational(u, y) -> np.ndarray:
    # quadratic numerator over a flat denominator: pole-free by construction
    quad = np.polyfit(u, y, 2)
    return np.array([quad[0], quad[1], quad[2], 0.0, 0.0])


def fit_nls(
    family,
    xs,
    ys,
    init=None,
    options: LMOptions | None = None,
    full_scale: float | None = None,
) -> tuple[FitModel, FitReport]:
    """Least-squares fit of one curve family to (xs, ys).

    ``init`` is given in the original x coordinates; when omitted a
    deterministic seed is derived from the data. Internally x is mapped to
    [0, 1] and the returned coefficients are mapped back. Rational fits whose
    denominator acquires a root inside [min(xs), max(xs)] are refit once from
    a pole-free seed; if that also fails, :class:`PoleError` is raised.
    """
    family = Family(family) if not isinstance(family, str) else Family.parse(family)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-D and of equal length")
    if xs.size < family.n_params:
        raise ValueError(f"need at least {family.n_params} points for {family.value}")
    lo, hi = float(xs.min()), float(xs.max())
    if hi == lo:
        raise DegenerateData("all x values are equal")
    u = (xs - lo) / (hi - lo)

    def residual(c):
        return evaluate(FitModel(family, c), u) - ys

    def jac(c):
        return jacobian(FitModel(family, c), u)

    def run(seed):
        return levenberg_marquardt(_guard(residual), _guard(jac), seed, options)

    if init is None:
        seed = initial_coefficients(family, u, ys)
    else:
        seed = np.asarray(rescale_coefficients(family, init, lo, hi - lo))
    result = run(seed)

    if family is Family.RATIONAL22 and denominator_roots_in(result.params, 0.0, 1.0).size:
        result = run(_fallback_rational(u, ys))
        if denominator_roots_in(result.params, 0.0, 1.0).size:
            raise PoleError("rational fit keeps a denominator root inside the data range")

    coeffs = rescale_coefficients(family, result.params, -lo / (hi - lo), 1.0 / (hi - lo))
    model = FitModel(family, coeffs, (lo, hi) if family is Family.RATIONAL22 else None)
    y_hat = evaluate(FitModel(family, result.params), u)
    fs = full_scale if full_scale is not None else float(np.ptp(ys)) or 1.0
    report = fit_metrics(ys, y_hat, fs, strict=False)
    report.iterations = result.iterations
    report.converged = result.converged
    report.family = family.value
    report.n_params = family.n_params
    return model, report


def _guard(fn):
    # LM treats non-finite residuals as rejected steps; poles must not abort it
    def wrapped(c):
        try:
            return fn(c)
        except PoleError:
            return np.full(1, np.inf)

    return wrapped
