"""Measurement-anchored correction of predictor outputs.

Each sampler step turns the predicted clean image x0hat into the minimizer
of

    ||A x - y||^2 + dc_weight * ||x - x0hat||^2

approached by a fixed number of plain conjugate-gradient iterations on the
normal equations, started at x0hat.  Small iteration counts are the point:
the quadratic never needs solving exactly, it only pulls the prediction
toward the data within the sampler's per-step budget.

dc_weight = 0 is allowed (pure early-stopped least squares; the normal
matrix may then be singular) and dc_weight = inf is the bypass sentinel
that returns x0hat untouched, turning the sampler into an image-domain
bridge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .linop import LinearOperator
from .schedule import Schedule


@dataclass(frozen=True)
class DCProblem:
    """One data-consistency solve: raw measurements, prediction, knobs."""

    y: np.ndarray
    x0hat: np.ndarray
    dc_weight: float
    cg_iters: int

    def __post_init__(self):
        if not (self.dc_weight >= 0):
            raise DomainError("dc_weight must be >= 0")
        if self.cg_iters < 0:
            raise DomainError("cg_iters must be >= 0")


@dataclass(frozen=True)
class DCResult:
    x: np.ndarray
    iterations: int
    breakdown: bool


def _dot(a: np.ndarray, b: np.ndarray, batched: bool):
    if not batched:
        return float(np.vdot(a, b))
    axes = tuple(range(1, a.ndim))
    return np.sum(a * b, axis=axes)


def solve_dc(problem: DCProblem, op: LinearOperator,
             init: np.ndarray | None = None) -> DCResult:
    """Run cg_iters CG steps on (A'A + w I) x = A'y + w x0hat.

    ``init`` overrides the starting iterate (warm starts); the right-hand
    side always anchors to x0hat.  Batched inputs with one extra leading
    axis are solved independently per row when the operator supports
    batching; curvature breakdown freezes a row at its current iterate and
    is reported through the flag.
    """
    x0 = np.asarray(problem.x0hat, dtype=float)
    if not math.isfinite(problem.dc_weight):
        return DCResult(x0.copy(), 0, False)
    if problem.cg_iters == 0:
        return DCResult(x0.copy(), 0, False)

    batched = x0.shape != op.x_shape
    if batched:
        if not (op.supports_batch and x0.shape[1:] == op.x_shape):
            raise DomainError(
                f"x0hat shape {x0.shape} fits neither {op.x_shape} nor a batch of it")

    w = problem.dc_weight
    y = np.asarray(problem.y, dtype=float)

    def normal(v):
        return op.adjoint(op.forward(v)) + w * v

    x = x0.copy() if init is None else np.asarray(init, dtype=float).copy()
    b = op.adjoint(y) + w * x0
    r = b - normal(x)
    p = r.copy()
    rs = _dot(r, r, batched)

    # Machine floor: once the residual falls this far below the right-hand
    # side the recurrence holds only roundoff, and iterating a singular
    # system further pumps that noise into directions the data cannot see.
    floor = 1e-26 * _dot(b, b, batched)

    broke = np.zeros(x.shape[0], dtype=bool) if batched else False
    active = rs > floor
    iterations = 0
    for _ in range(problem.cg_iters):
        if not np.any(active):
            break
        ap = normal(p)
        pap = _dot(p, ap, batched)
        if batched:
            bad = active & (pap <= 0)
            broke |= bad
            active = active & ~bad
            if not np.any(active):
                break
            safe = np.where(pap > 0, pap, 1.0)
            alpha = np.where(active, rs / safe, 0.0)
            ax = alpha.reshape((-1,) + (1,) * (x.ndim - 1))
            x += ax * p
            r -= ax * ap
            rs_new = _dot(r, r, batched)
            beta = np.where(active, rs_new / np.where(rs > 0, rs, 1.0), 0.0)
            p = r + beta.reshape(ax.shape) * p
            rs = rs_new
            active = active & (rs > floor)
        else:
            if pap <= 0:
                broke = True
                break
            alpha = rs / pap
            x += alpha * p
            r -= alpha * ap
            rs_new = _dot(r, r, batched)
            p = r + (rs_new / rs) * p
            rs = rs_new
            active = rs > floor
        iterations += 1
    return DCResult(x, iterations, bool(np.any(broke)) if batched else broke)


def kx_time_varying(schedule: Schedule, t: float, sigma_x2: float,
                    sigma_y2: float) -> float:
    """Noise-balancing consistency weight at bridge time t.

    Grows from sigma_y2 / sigma_x2 at the far end of the bridge as the
    remaining uncertainty about the clean image shrinks; singular at t = 0
    where the bridge pins the state exactly.
    """
    if sigma_x2 <= 0:
        raise DomainError("sigma_x2 must be positive")
    if sigma_y2 < 0:
        raise DomainError("sigma_y2 must be non-negative")
    if t <= 0:
        raise DomainError("the consistency weight diverges at t = 0")
    s2 = schedule.sigma2(t)
    s2bar = schedule.sigma2_bar(t)
    total = schedule.total_variance
    return (1.0 + s2bar * sigma_x2 / (s2 * total)) * sigma_y2 / sigma_x2
