from .fit import fit_nls, initial_coefficients
from .models import (
    DISPLAY_NAMES,
    Family,
    FitModel,
    denominator_roots_in,
    evaluate,
    jacobian,
    rescale_coefficients,
)
from .quality import FitReport, fit_metrics
from .solver import LMOptions, LMResult, levenberg_marquardt

__all__ = [
    "DISPLAY_NAMES",
    "Family",
    "FitModel",
    "FitReport",
    "LMOptions",
    "LMResult",
    "denominator_roots_in",
    "evaluate",
    "fit_metrics",
    "fit_nls",
    "initial_coefficients",
    "jacobian",
    "levenberg_marquardt",
    "rescale_coefficients",
]
