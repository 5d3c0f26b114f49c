"""Variance-exploding bridge noise schedules and discrete time grids.

A schedule is defined by its squared diffusion coefficient g2(t) on [0, T].
Everything else follows from the two accumulated variances

    sigma2(t)     = integral of g2 over [0, t]      (noise injected so far)
    sigma2_bar(t) = integral of g2 over [t, T]      (noise still to come)

whose sum is the constant total_variance = sigma2(T).  Two families are
provided: a symmetric piecewise-linear-in-g one ("i2sb") and the linear
g2(t) = 2t one ("ddbm_ve", sigma2 = t^2).  Both have closed-form integrals;
a quadrature fallback exists for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import DomainError

I2SB = "i2sb"
DDBM_VE = "ddbm_ve"
_KINDS = (I2SB, DDBM_VE)


@dataclass(frozen=True)
class Schedule:
    """Noise schedule of a variance-exploding diffusion bridge.

    Parameters
    ----------
    kind : str
        One of ``"i2sb"`` or ``"ddbm_ve"``.
    horizon : float
        Terminal time T > 0.
    beta0, beta1 : float
        Endpoint and peak-defining squared diffusion values of the
        symmetric schedule.  Ignored by ``ddbm_ve``.
    """

    kind: str
    horizon: float
    beta0: float = 0.1
    beta1: float = 0.3

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown schedule kind {self.kind!r}")
        if not self.horizon > 0:
            raise DomainError("schedule horizon must be positive")
        if self.kind == I2SB and (self.beta0 <= 0 or self.beta1 < self.beta0):
            raise DomainError("i2sb schedule needs 0 < beta0 <= beta1")

    @classmethod
    def i2sb(cls, beta0: float = 0.1, beta1: float = 0.3, horizon: float = 1.0) -> "Schedule":
        return cls(kind=I2SB, horizon=horizon, beta0=beta0, beta1=beta1)

    @classmethod
    def ddbm_ve(cls, horizon: float = 2.5) -> "Schedule":
        return cls(kind=DDBM_VE, horizon=horizon)

    # -- local coefficient -------------------------------------------------

    def g2(self, t):
        """Squared diffusion coefficient g^2(t); accepts scalars or arrays."""
        t = self._checked(t)
        if self.kind == DDBM_VE:
            return 2.0 * t
        s0 = np.sqrt(self.beta0)
        s1 = np.sqrt(self.beta1)
        u = t / self.horizon
        g = 0.5 * (s1 + s0) - 0.5 * (s1 - s0) * np.abs(2.0 * u - 1.0)
        return g * g

    # -- accumulated variances ---------------------------------------------

    def sigma2(self, t):
        """Noise variance accumulated on [0, t]."""
        t = self._checked(t)
        if self.kind == DDBM_VE:
            return t * t
        return self._i2sb_sigma2(t)

    def sigma2_bar(self, t):
        """Noise variance remaining on [t, T]."""
        return self.total_variance - self.sigma2(t)

    @property
    def total_variance(self) -> float:
        if self.kind == DDBM_VE:
            return self.horizon * self.horizon
        return float(self._i2sb_sigma2(np.asarray(self.horizon)))

    def _i2sb_sigma2(self, t):
        # g is linear on each half of [0, T]; integrate (a + b u)^2 exactly.
        s0 = np.sqrt(self.beta0)
        s1 = np.sqrt(self.beta1)
        smid = 0.5 * (s0 + s1)
        delta = 0.5 * (s1 - s0)
        u = np.asarray(t, dtype=float) / self.horizon
        if delta == 0.0:
            return self.beta0 * np.asarray(t, dtype=float)
        # rising half: g(u) = s0 + 2 delta u
        g_lo = s0 + 2.0 * delta * np.minimum(u, 0.5)
        lo = (g_lo**3 - s0**3) / (6.0 * delta)
        # falling half: g(u) = smid - delta (2u - 1)
        g_hi = smid - delta * (2.0 * np.maximum(u, 0.5) - 1.0)
        hi = (smid**3 - g_hi**3) / (6.0 * delta)
        out = self.horizon * (lo + hi)
        return out if out.ndim else float(out)

    def _checked(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.horizon):
            raise DomainError(
                f"time outside schedule domain [0, {self.horizon}]"
            )
        return t if t.ndim else float(t)


def schedule_eval(schedule: Schedule, t):
    """Return (sigma2, sigma2_bar, g2) at time t.

    Scalars in, scalars out; arrays in, arrays out.  Raises DomainError
    outside [0, T].
    """
    return schedule.sigma2(t), schedule.sigma2_bar(t), schedule.g2(t)


def sigma2_by_quadrature(schedule: Schedule, t: float, rel_tol: float = 1e-12) -> float:
    """Integrate g2 numerically; slow fallback used to validate closed forms."""
    t = float(t)
    if t < 0.0 or t > schedule.horizon:
        raise DomainError("time outside schedule domain")
    if t == 0.0:
        return 0.0
    # split at the kink of the symmetric schedule so quad sees smooth pieces
    points = [0.5 * schedule.horizon] if schedule.kind == I2SB else None
    val, _ = quad(lambda u: schedule.g2(u), 0.0, t,
                  points=[p for p in (points or []) if p < t] or None,
                  epsabs=0.0, epsrel=rel_tol, limit=200)
    return val


@dataclass(frozen=True)
class TimeGrid:
    """Descending sampler grid t_N = T > ... > t_0 = 0.

    ``times[k]`` holds t_{N-k}; endpoints are exact because entries are
    generated from integer indices.
    """

    times: np.ndarray
    n_steps: int

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size != self.n_steps + 1:
            raise DomainError("grid must hold n_steps + 1 times")
        if np.any(np.diff(times) >= 0.0):
            raise DomainError("grid times must be strictly decreasing")
        object.__setattr__(self, "times", times)

    def step_pairs(self):
        """Yield (step_index, t, t_prev) from t_N down to t_1."""
        n = self.n_steps
        for k in range(n):
            yield n - k, float(self.times[k]), float(self.times[k + 1])


def make_time_grid(schedule: Schedule, n_steps: int) -> TimeGrid:
    """Uniform grid t_i = i * T / n_steps, returned in descending order."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    idx = np.arange(n_steps, -1, -1)
    times = schedule.horizon * idx / float(n_steps)
    return TimeGrid(times=times, n_steps=n_steps)
