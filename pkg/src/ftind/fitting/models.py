"""The four one-dimensional curve families and their analytic jacobians."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import expit

from ..errors import PoleError

POLE_EPS = 1e-12


class Family(str, enum.Enum):
    POLYNOMIAL4 = "polynomial4"
    SIGMOID_SUM = "sigmoid"
    GAUSSIAN_MIXTURE = "gaussian"
    RATIONAL22 = "rational"

    @property
    def n_params(self) -> int:
        return N_PARAMS[self]

    @classmethod
    def parse(cls, name: str) -> Family:
        key = name.lower().replace("-", "").replace("_", "")
        for fam in cls:
            if key in (fam.value, fam.name.lower().replace("_", "")):
                return fam
        raise ValueError(f"unknown curve family {name!r}")


N_PARAMS = {
    Family.POLYNOMIAL4: 5,
    Family.SIGMOID_SUM: 6,
    Family.GAUSSIAN_MIXTURE: 6,
    Family.RATIONAL22: 5,
}

DISPLAY_NAMES = {
    Family.POLYNOMIAL4: "Polynomial function",
    Family.SIGMOID_SUM: "Sigmoid function",
    Family.GAUSSIAN_MIXTURE: "Gaussian model",
    Family.RATIONAL22: "Rational function",
}


@dataclass(frozen=True)
class FitModel:
    """A curve family plus its coefficient vector.

    Coefficient order: polynomial ``a0..a4`` (ascending powers); sigmoid
    ``b1..b6``; gaussian ``c1..c6``; rational ``d1..d5`` for
    ``(d1 x^2 + d2 x + d3) / (d4 x^2 + d5 x + 1)``.

    ``domain`` is the (lo, hi) input interval the model is declared on; for
    rationals the denominator must not vanish anywhere inside it.
    """

    family: Family
    coefficients: tuple[float, ...]
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if len(self.coefficients) != self.family.n_params:
            raise ValueError(
                f"{self.family.value} takes {self.family.n_params} coefficients, "
                f"got {len(self.coefficients)}"
            )
        if self.domain is not None and self.family is Family.RATIONAL22:
            lo, hi = self.domain
            roots = denominator_roots_in(self.coefficients, lo, hi)
            if roots.size:
                raise PoleError(f"denominator root(s) {roots} inside domain [{lo}, {hi}]")

    def __call__(self, x):
        return evaluate(self, x)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "coefficients": list(self.coefficients),
            "domain": None if self.domain is None else list(self.domain),
        }

    @classmethod
    def from_dict(cls, d: dict) -> FitModel:
        dom = d.get("domain")
        domain = None if dom is None else tuple(dom)
        return cls(Family(d["family"]), tuple(d["coefficients"]), domain)


def denominator_roots_in(coeffs, lo: float, hi: float) -> np.ndarray:
    """Real roots of ``d4 x^2 + d5 x + 1`` lying in the closed interval [lo, hi]."""
    d4, d5 = coeffs[3], coeffs[4]
    roots = Polynomial([1.0, d5, d4]).roots() if (d4 or d5) else np.array([])
    real = roots[np.abs(np.imag(roots)) <= 1e-12 * np.maximum(1.0, np.abs(roots))].real
    return np.sort(real[(real >= lo) & (real <= hi)])


def _rational_parts(c, x):
    num = (c[0] * x + c[1]) * x + c[2]
    den = (c[3] * x + c[4]) * x + 1.0
    if np.any(np.abs(den) < POLE_EPS):
        raise PoleError("rational denominator vanishes at the evaluation point")
    return num, den


def evaluate(m: FitModel, x):
    x = np.asarray(x, dtype=float)
    c = m.coefficients
    fam = m.family
    if fam is Family.POLYNOMIAL4:
        y = (((c[4] * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0]
    elif fam is Family.SIGMOID_SUM:
        y = c[0] * expit(c[1] * (x - c[2])) + c[3] * expit(c[4] * (x - c[5]))
    elif fam is Family.GAUSSIAN_MIXTURE:
        y = c[0] * np.exp(-((x - c[1]) ** 2) / (2 * c[2] ** 2)) + c[3] * np.exp(
            -((x - c[4]) ** 2) / (2 * c[5] ** 2)
        )
    else:
        num, den = _rational_parts(c, x)
        y = num / den
    return float(y) if y.ndim == 0 else y


def jacobian(m: FitModel, xs) -> np.ndarray:
    """d evaluate / d coefficients, shape (n_points, n_coeffs)."""
    x = np.atleast_1d(np.asarray(xs, dtype=float))
    c = m.coefficients
    fam = m.family
    if fam is Family.POLYNOMIAL4:
        return np.vander(x, 5, increasing=True)
    if fam is Family.SIGMOID_SUM:
        cols = []
        for amp, slope, centre in (c[0:3], c[3:6]):
            s = expit(slope * (x - centre))
            ds = s * (1.0 - s)
            cols += [s, amp * ds * (x - centre), -amp * ds * slope]
        return np.column_stack(cols)
    if fam is Family.GAUSSIAN_MIXTURE:
        cols = []
        for amp, centre, width in (c[0:3], c[3:6]):
            dx = x - centre
            g = np.exp(-(dx**2) / (2 * width**2))
            cols += [g, amp * g * dx / width**2, amp * g * dx**2 / width**3]
        return np.column_stack(cols)
    num, den = _rational_parts(c, x)
    x2 = x * x
    q = num / den**2
    return np.column_stack([x2 / den, x / den, 1.0 / den, -q * x2, -q * x])


def rescale_coefficients(family: Family, coeffs, offset: float, scale: float) -> tuple:
    """Coefficients of the same curve expressed in ``u``, where ``x = offset + scale * u``.

    Passing ``(-offset / scale, 1 / scale)`` applies the inverse map.
    """
    c = np.asarray(coeffs, dtype=float)
    family = Family(family)
    affine = Polynomial([offset, scale])
    if family is Family.POLYNOMIAL4:
        out = Polynomial(c)(affine).coef
        return tuple(np.pad(out, (0, 5 - out.size)))
    if family is Family.SIGMOID_SUM:
        return (
            c[0], c[1] * scale, (c[2] - offset) / scale,
            c[3], c[4] * scale, (c[5] - offset) / scale,
        )
    if family is Family.GAUSSIAN_MIXTURE:
        return (
            c[0], (c[1] - offset) / scale, c[2] / scale,
            c[3], (c[4] - offset) / scale, c[5] / scale,
        )
    num = np.pad(Polynomial(c[2::-1])(affine).coef, (0, 3))[:3]
    den = np.pad(Polynomial([1.0, c[4], c[3]])(affine).coef, (0, 3))[:3]
    if abs(den[0]) < POLE_EPS:
        raise PoleError("denominator vanishes at the new origin; cannot normalise it to 1")
    num, den = num / den[0], den / den[0]
    return (num[2], num[1], num[0], den[2], den[1])
