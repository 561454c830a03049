"""Levenberg-Marquardt for small dense nonlinear least-squares problems."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteResidual, SingularNormalEquations

log = logging.getLogger(__name__)


@dataclass
class LMOptions:
    max_iters: int = 200
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    lambda_max: float = 1e16
    ftol: float = 1e-12  # relative cost decrease
    gtol: float = 1e-10  # infinity norm of J^T r


@dataclass
class LMResult:
    params: np.ndarray
    cost: float
    iterations: int
    converged: bool
    reason: str
    cost_history: list[float] = field(default_factory=list)


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    p0,
    options: LMOptions | None = None,
) -> LMResult:
    """Minimise ``sum(residual(p)**2)`` starting from ``p0``.

    Damping is Marquardt-scaled: the step solves
    ``(J^T J + lam * diag(J^T J)) dp = -J^T r``, done as an augmented
    least-squares system for conditioning. ``lam`` is multiplied by
    ``lambda_up`` on a rejected step and divided by ``lambda_down`` on an
    accepted one. A step is only accepted if it strictly lowers the cost,
    so the accepted-cost sequence is monotone.
    """
    opts = options or LMOptions()
    p = np.array(p0, dtype=float)
    if not np.all(np.isfinite(p)):
        raise NonFiniteResidual("initial parameters are not finite")
    r = residual(p)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidual("residual is not finite at the initial point")
    cost = float(r @ r)
    history = [cost]
    lam = opts.lambda0
    n = p.size

    for it in range(1, opts.max_iters + 1):
        if cost == 0.0:
            return LMResult(p, cost, it - 1, True, "zero residual", history)
        J = jacobian(p)
        if not np.all(np.isfinite(J)):
            raise NonFiniteResidual("jacobian is not finite")
        grad = J.T @ r
        if np.max(np.abs(grad)) < opts.gtol:
            return LMResult(p, cost, it - 1, True, "gradient tolerance", history)
        scale = np.sqrt(np.maximum(np.sum(J * J, axis=0), 1e-300))

        while True:
            if lam > 0:
                A = np.vstack([J, np.diag(np.sqrt(lam) * scale)])
                b = np.concatenate([-r, np.zeros(n)])
            else:
                A, b = J, -r
            try:
                step = np.linalg.lstsq(A, b, rcond=None)[0]
            except np.linalg.LinAlgError as exc:
                raise SingularNormalEquations(str(exc)) from exc
            if not np.all(np.isfinite(step)):
                raise SingularNormalEquations("non-finite step from the normal equations")
            p_new = p + step
            with np.errstate(all="ignore"):
                r_new = residual(p_new)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                break
            lam = lam * opts.lambda_up if lam > 0 else opts.lambda0 or 1e-3
            if lam > opts.lambda_max:
                # No damping finds a descent step: we are at a minimum to machine
                # precision unless the gradient is still clearly non-zero.
                if len(history) > 1 or np.max(np.abs(grad)) <= 1e-8 * (1.0 + cost):
                    return LMResult(p, cost, it, True, "no further decrease", history)
                raise SingularNormalEquations("damping exhausted without a descent step")

        rel = (cost - cost_new) / cost
        p, r, cost = p_new, r_new, cost_new
        history.append(cost)
        lam /= opts.lambda_down
        log.debug("LM iter %d cost %.6e lambda %.1e", it, cost, lam)
        if rel < opts.ftol:
            return LMResult(p, cost, it, True, "cost tolerance", history)

    return LMResult(p, cost, opts.max_iters, False, "max iterations", history)
