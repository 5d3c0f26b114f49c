"""Diffusion-bridge sampler between a clean image and its FBP reconstruction.

The forward process interpolates X_0 -> X_FBP with variance-exploding noise
that vanishes at both ends; the reverse process starts at X_FBP and walks
back to a clean sample.  Each reverse step mixes the consistency-corrected
prediction, the current state, and X_FBP:

    X_prev = a * x0p + b * X_t + c * X_FBP + eta * eps

with coefficients chosen so the linear part of the dynamics is integrated
exactly across the step; only the predictor output is treated as constant
within a step, so discretization error comes from nowhere else.

The noise scale eta interpolates between a deterministic update (gamma = 0)
and full per-step renoising (eta_max, the gamma -> infinity limit, requested
by default).  The radicand that couples eta to the retained-state coefficient
b factors exactly as (sigma_prev^2 sigma_bar_prev^2) * ratio^(2 gamma^2), so
both limits are hit bitwise rather than through cancelling subtractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .consistency import DCProblem, kx_time_varying, solve_dc
from .errors import DomainError, NumericError
from .linop import LinearOperator
from .rng import ensemble_stream, trajectory_stream
from .schedule import Schedule, TimeGrid

# gamma value requesting the maximal noise scale; math.inf works identically
ETA_MAX = math.inf

DC_CONSTANT = "constant"
DC_TIME_VARYING = "time_varying"


@dataclass(frozen=True)
class SamplerConfig:
    """Everything one reverse trajectory needs besides data and predictor.

    ``gamma`` is the stochasticity knob (ETA_MAX/inf for maximal noise);
    ``dc_weight`` the consistency strength (inf bypasses the solve, making
    the sampler a pure image-domain bridge, as does ``cg_iters`` = 0).  In
    time-varying mode the weight is recomputed each step from
    (sigma_x2, sigma_y2) and ``dc_weight`` is ignored.  ``warm_start``
    seeds each CG solve with the previous step's corrected prediction
    instead of the fresh one.  ``trajectory`` tags the noise stream so
    parallel trajectories stay reproducible and independent.
    """

    schedule: Schedule
    grid: TimeGrid
    gamma: float = ETA_MAX
    dc_weight: float = 1.0
    cg_iters: int = 10
    dc_mode: str = DC_CONSTANT
    sigma_x2: float = 1.0
    sigma_y2: float = 0.0
    skip_dc_last_step: bool = False
    warm_start: bool = False
    seed: int = 0
    trajectory: int = 0

    def __post_init__(self):
        if not (self.gamma >= 0):
            raise DomainError("gamma must be >= 0")
        if not (self.dc_weight >= 0):
            raise DomainError("dc_weight must be >= 0")
        if self.cg_iters < 0:
            raise DomainError("cg_iters must be >= 0")
        if self.dc_mode not in (DC_CONSTANT, DC_TIME_VARYING):
            raise DomainError(f"unknown dc_mode {self.dc_mode!r}")
        if self.grid.times[0] != self.schedule.horizon:
            raise DomainError("time grid must start at the schedule horizon")
        if self.grid.times[-1] != 0.0:
            raise DomainError("time grid must end at 0")


@dataclass(frozen=True)
class StepCoefficients:
    a: float
    b: float
    c: float
    eta: float


def forward_sample(schedule: Schedule, x0: np.ndarray, xfbp: np.ndarray,
                   t: float, rng: np.random.Generator) -> np.ndarray:
    """Draw X_t given the endpoints; exact at t = 0 and t = horizon."""
    s2 = schedule.sigma2(t)
    s2bar = schedule.sigma2_bar(t)
    total = schedule.total_variance
    x0 = np.asarray(x0, dtype=float)
    xfbp = np.asarray(xfbp, dtype=float)
    mean = (s2bar / total) * x0 + (s2 / total) * xfbp
    std = math.sqrt(s2 * s2bar / total)
    if std == 0.0:
        return mean
    return mean + std * rng.standard_normal(x0.shape)


def step_coeffs(schedule: Schedule, t: float, t_prev: float,
                gamma: float = ETA_MAX,
                eta_override: float | None = None) -> StepCoefficients:
    """Mixing coefficients for one reverse step t -> t_prev.

    With P = sigma2_prev * sigma2_bar_prev and ratio r < 1, the noise scale
    is eta = sqrt(P (1 - r^(2 gamma^2))) / sigma_T and the retained-state
    coefficient is b = sqrt(P) r^(gamma^2) / (sigma_t sigma_bar_t); gamma = 0
    and the eta_max limit are therefore exact.  At t = horizon the state
    carries no noise to retain (the bridge is pinned at X_FBP), so b = 0 is
    the analytic limit regardless of eta.
    """
    if not 0 <= t_prev < t <= schedule.horizon:
        raise DomainError("need 0 <= t_prev < t <= horizon")
    s2_t = schedule.sigma2(t)
    s2bar_t = schedule.sigma2_bar(t)
    s2_p = schedule.sigma2(t_prev)
    s2bar_p = schedule.sigma2_bar(t_prev)
    total = schedule.total_variance

    p = s2_p * s2bar_p
    eta_max2 = p / total

    if eta_override is not None:
        if eta_override < 0:
            raise DomainError("eta must be >= 0")
        eta2 = eta_override * eta_override
        radicand = p - eta2 * total
        if radicand < 0:
            raise DomainError(
                f"eta {eta_override} exceeds the feasible scale sqrt({eta_max2})")
        eta = eta_override
    else:
        if s2bar_t == 0.0 or s2_p == 0.0:
            ratio_pow = 0.0 if gamma > 0 else 1.0
        else:
            ratio = math.sqrt((s2_p * s2bar_t) / (s2bar_p * s2_t))
            ratio_pow = ratio ** (2.0 * gamma * gamma) if math.isfinite(gamma) else 0.0
        eta2 = eta_max2 * (1.0 - ratio_pow)
        radicand = p * ratio_pow
        eta = math.sqrt(eta2)

    if s2bar_t == 0.0:
        b = 0.0
    else:
        b = math.sqrt(radicand) / math.sqrt(s2_t * s2bar_t)
    a = s2bar_p / total - (s2bar_t / total) * b
    c = s2_p / total - (s2_t / total) * b
    return StepCoefficients(a=a, b=b, c=c, eta=eta)


def reverse_step(xt: np.ndarray, x0p: np.ndarray, xfbp: np.ndarray,
                 coeffs: StepCoefficients,
                 rng: np.random.Generator | None) -> np.ndarray:
    """One discretized reverse update; deterministic when eta = 0."""
    xt = np.asarray(xt, dtype=float)
    if xt.shape != np.shape(x0p) or xt.shape != np.shape(xfbp):
        raise DomainError("state, prediction, and anchor shapes must agree")
    out = coeffs.a * np.asarray(x0p, dtype=float) + coeffs.b * xt \
        + coeffs.c * np.asarray(xfbp, dtype=float)
    if coeffs.eta > 0.0:
        if rng is None:
            raise DomainError("a stochastic step needs a generator")
        out += coeffs.eta * rng.standard_normal(xt.shape)
    return out


Predictor = Callable[[np.ndarray, float, np.ndarray], np.ndarray]


def _dc_enabled(cfg: SamplerConfig) -> bool:
    if cfg.cg_iters == 0:
        return False
    if cfg.dc_mode == DC_CONSTANT and not math.isfinite(cfg.dc_weight):
        return False
    return True


def _weight_at(cfg: SamplerConfig, t: float) -> float:
    if cfg.dc_mode == DC_TIME_VARYING:
        return kx_time_varying(cfg.schedule, t, cfg.sigma_x2, cfg.sigma_y2)
    return cfg.dc_weight


def run_sampler(y_raw: np.ndarray, op: LinearOperator, xfbp: np.ndarray,
                predictor: Predictor, cfg: SamplerConfig) -> np.ndarray:
    """Walk the reverse bridge from X_FBP to a clean sample.

    Per step: predict the clean image, pull it toward the raw measurements
    (unless disabled, or skipped on the final step), then apply the
    discretized update with a fresh noise stream keyed by
    (seed, trajectory, step).  Any non-finite intermediate aborts with the
    offending step index.
    """
    xfbp = np.asarray(xfbp, dtype=float)
    x = xfbp.copy()
    dc_on = _dc_enabled(cfg)
    prev_x0p = None
    for step, t, t_prev in cfg.grid.step_pairs():
        x0hat = np.asarray(predictor(x, t, xfbp), dtype=float)
        if x0hat.shape != x.shape:
            raise DomainError(
                f"predictor returned shape {x0hat.shape}, expected {x.shape}")
        if not np.all(np.isfinite(x0hat)):
            raise NumericError(f"predictor output non-finite at step {step}",
                               step=step)
        last = t_prev == cfg.grid.times[-1]
        if dc_on and not (cfg.skip_dc_last_step and last):
            problem = DCProblem(y_raw, x0hat, _weight_at(cfg, t), cfg.cg_iters)
            init = prev_x0p if (cfg.warm_start and prev_x0p is not None) else None
            x0p = solve_dc(problem, op, init=init).x
        else:
            x0p = x0hat
        prev_x0p = x0p
        coeffs = step_coeffs(cfg.schedule, t, t_prev, gamma=cfg.gamma)
        rng = trajectory_stream(cfg.seed, cfg.trajectory, step)
        x = reverse_step(x, x0p, xfbp, coeffs, rng)
        if not np.all(np.isfinite(x)):
            raise NumericError(f"state non-finite after step {step}", step=step)
    return x


def run_ensemble(y_raw: np.ndarray, op: LinearOperator, xfbp: np.ndarray,
                 predictor: Predictor, cfg: SamplerConfig,
                 n_trajectories: int) -> np.ndarray:
    """Simulate many reverse trajectories at once on a leading batch axis.

    Predictor and operator must accept the batch; the per-step noise block
    comes from a stream keyed by (seed, step) with one row per trajectory,
    a coarser keying than run_sampler's per-trajectory streams, traded for
    a single vectorized draw.  Meant for Monte Carlo studies on small
    worlds, not image-scale reconstruction.
    """
    if n_trajectories < 1:
        raise DomainError("need at least one trajectory")
    xfbp = np.asarray(xfbp, dtype=float)
    anchor = np.broadcast_to(xfbp, (n_trajectories,) + xfbp.shape)
    x = np.repeat(xfbp[None], n_trajectories, axis=0)
    dc_on = _dc_enabled(cfg)
    for step, t, t_prev in cfg.grid.step_pairs():
        x0hat = np.asarray(predictor(x, t, anchor), dtype=float)
        if not np.all(np.isfinite(x0hat)):
            raise NumericError(f"predictor output non-finite at step {step}",
                               step=step)
        last = t_prev == cfg.grid.times[-1]
        if dc_on and not (cfg.skip_dc_last_step and last):
            problem = DCProblem(y_raw, x0hat, _weight_at(cfg, t), cfg.cg_iters)
            x0p = solve_dc(problem, op).x
        else:
            x0p = x0hat
        coeffs = step_coeffs(cfg.schedule, t, t_prev, gamma=cfg.gamma)
        x = coeffs.a * x0p + coeffs.b * x + coeffs.c * anchor
        if coeffs.eta > 0.0:
            noise = ensemble_stream(cfg.seed, step).standard_normal(x.shape)
            x += coeffs.eta * noise
        if not np.all(np.isfinite(x)):
            raise NumericError(f"state non-finite after step {step}", step=step)
    return x
