from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DegenerateData


@dataclass
class FitReport:
    rmse: float
    r_squared: float | None  # None when the data are constant
    linearity_error_pct: float
    iterations: int = 0
    converged: bool = True
    family: str | None = None
    n_params: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def fit_metrics(ys, y_hats, full_scale: float, strict: bool = True) -> FitReport:
    """RMSE, R^2 and linearity error (max |residual| as % of ``full_scale``).

    With ``strict=False`` constant ``ys`` give ``r_squared=None`` instead of
    raising :class:`DegenerateData`.
    """
    ys = np.asarray(ys, dtype=float)
    y_hats = np.asarray(y_hats, dtype=float)
    if ys.shape != y_hats.shape or ys.ndim != 1:
        raise ValueError("ys and y_hats must be 1-D and of equal length")
    if ys.size < 2:
        raise ValueError("need at least two points")
    if not full_scale > 0:
        raise ValueError("full_scale must be > 0")
    resid = ys - y_hats
    ss_res = float(resid @ resid)
    centred = ys - ys.mean()
    ss_tot = float(centred @ centred)
    if ss_tot == 0.0:
        if strict:
            raise DegenerateData("constant data: R^2 is undefined")
        r2 = None
    else:
        r2 = 1.0 - ss_res / ss_tot
    return FitReport(
        rmse=float(np.sqrt(ss_res / ys.size)),
        r_squared=r2,
        linearity_error_pct=float(100.0 * np.max(np.abs(resid)) / full_scale),
    )
