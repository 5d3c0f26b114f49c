"""Dense linear-Gaussian worlds where every sampler quantity is closed-form.

A world fixes an affine prior-mean map Z, isotropic prior and measurement
noise, a dense measurement matrix, and one conditioning vector.  Everything
the bridge sampler estimates numerically (clean-image posterior, corrected
prediction, scores, marginals along the bridge) then has an exact dense
expression, so the sampler can be audited against brute-force linear
algebra instead of against itself.

Sizes are intentionally tiny (d, n <= 64); nothing here is meant to touch
image-scale data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .consistency import kx_time_varying
from .errors import DomainError, NumericError
from .schedule import Schedule, TimeGrid

_SIZE_CAP = 64


@dataclass(frozen=True)
class GaussianWorld:
    """One fully specified linear-Gaussian reconstruction problem."""

    a: np.ndarray          # (n, d) measurement matrix
    z_matrix: np.ndarray   # (d, d) anchor-to-prior-mean map
    z_offset: np.ndarray   # (d,)
    sigma_x2: float
    sigma_y2: float
    x_fbp: np.ndarray      # (d,) conditioning vector

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        object.__setattr__(self, "a", a)
        d = a.shape[1]
        for name, shape in (("z_matrix", (d, d)), ("z_offset", (d,)),
                            ("x_fbp", (d,))):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DomainError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        if not (self.sigma_x2 > 0 and self.sigma_y2 > 0):
            raise DomainError("prior and measurement variances must be positive")
        if d > _SIZE_CAP or a.shape[0] > _SIZE_CAP:
            raise DomainError(f"world dimensions above {_SIZE_CAP} defeat the point")

    @property
    def d(self) -> int:
        return self.a.shape[1]

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def prior_mean(self) -> np.ndarray:
        return self.z_matrix @ self.x_fbp + self.z_offset


def gaussian_bayes(mu1, cov1, m, mu2, cov2, z2):
    """Condition z1 on z2 for z1 ~ N(mu1, cov1), z2|z1 ~ N(M z1 + mu2, cov2).

    Information-form result; the Schur-complement routine below derives the
    same conditional from the stacked joint so the two can audit each other.
    """
    mu1 = np.asarray(mu1, dtype=float)
    cov1 = np.asarray(cov1, dtype=float)
    m = np.asarray(m, dtype=float)
    prec = np.linalg.inv(cov1) + m.T @ np.linalg.solve(cov2, m)
    cov_post = np.linalg.inv(prec)
    rhs = np.linalg.solve(cov1, mu1) + m.T @ np.linalg.solve(
        cov2, np.asarray(z2, dtype=float) - np.asarray(mu2, dtype=float))
    return cov_post @ rhs, cov_post


def schur_conditional(mu1, cov1, m, mu2, cov2, z2):
    """Same conditional via the joint covariance of (z1, z2)."""
    mu1 = np.asarray(mu1, dtype=float)
    cov1 = np.asarray(cov1, dtype=float)
    m = np.asarray(m, dtype=float)
    cross = cov1 @ m.T                       # cov(z1, z2)
    s22 = m @ cov1 @ m.T + np.asarray(cov2, dtype=float)
    mean2 = m @ mu1 + np.asarray(mu2, dtype=float)
    gain = np.linalg.solve(s22, np.eye(s22.shape[0]))
    mean = mu1 + cross @ gain @ (np.asarray(z2, dtype=float) - mean2)
    cov = cov1 - cross @ gain @ cross.T
    return mean, cov


def _mixture_coeffs(schedule: Schedule, t: float):
    s2 = schedule.sigma2(t)
    s2b = schedule.sigma2_bar(t)
    tot = schedule.total_variance
    return s2, s2b, tot


def _cond_mean_cov(world: GaussianWorld, schedule: Schedule,
                   xt: np.ndarray, t: float):
    """Clean-image conditional given the state; regular on (0, horizon]."""
    s2, s2b, tot = _mixture_coeffs(schedule, t)
    cov = world.sigma_x2 * s2 * tot / (s2 * tot + s2b * world.sigma_x2)
    z = world.prior_mean()
    mean = cov * (z / world.sigma_x2 + (xt - (s2 / tot) * world.x_fbp) / s2)
    return mean, cov


def cond_moments_x0_given_xt(world: GaussianWorld, schedule: Schedule,
                             xt: np.ndarray, t: float):
    """Mean and scalar covariance of the clean image given state and anchor."""
    if not 0 < t < schedule.horizon:
        raise DomainError("conditional moments are degenerate at the endpoints")
    return _cond_mean_cov(world, schedule, np.asarray(xt, dtype=float), t)


def make_gaussian_predictor(world: GaussianWorld, schedule: Schedule):
    """The exact expected-clean-image predictor for this world.

    Shares _cond_mean_cov with cond_moments_x0_given_xt, so the sampler's
    predictor and the oracle's conditional mean cannot drift apart.  Valid
    on (0, horizon]; broadcasts over leading batch axes.
    """
    def predict(xt, t, xfbp):
        mean, _ = _cond_mean_cov(world, schedule, np.asarray(xt, dtype=float), t)
        return mean

    return predict


def exact_x0p(world: GaussianWorld, schedule: Schedule, xt: np.ndarray,
              y: np.ndarray, t: float) -> np.ndarray:
    """Dense solve for the measurement-corrected conditional mean."""
    if not 0 < t <= schedule.horizon:
        raise DomainError("need 0 < t <= horizon")
    x0hat, _ = _cond_mean_cov(world, schedule, np.asarray(xt, dtype=float), t)
    k = kx_time_varying(schedule, t, world.sigma_x2, world.sigma_y2)
    lhs = world.a.T @ world.a + k * np.eye(world.d)
    rhs = world.a.T @ np.asarray(y, dtype=float) + k * x0hat
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"normal system is singular (weight {k})") from exc


def posterior_x0(world: GaussianWorld, y: np.ndarray):
    """Moments of the clean image given anchor and measurements."""
    d = world.d
    return gaussian_bayes(
        world.prior_mean(), world.sigma_x2 * np.eye(d),
        world.a, np.zeros(world.n), world.sigma_y2 * np.eye(world.n),
        np.asarray(y, dtype=float))


def forward_marginal_moments(world: GaussianWorld, schedule: Schedule,
                             y: np.ndarray, t: float):
    """Moments of the bridge state at time t given anchor and measurements.

    The exact clean-image posterior pushed through the forward mixture; the
    analytic side of the marginal-preservation check.
    """
    if not 0 <= t <= schedule.horizon:
        raise DomainError("time outside the bridge")
    mean0, cov0 = posterior_x0(world, y)
    s2, s2b, tot = _mixture_coeffs(schedule, t)
    alpha = s2b / tot
    mean = alpha * mean0 + (s2 / tot) * world.x_fbp
    cov = alpha * alpha * cov0 + (s2 * s2b / tot) * np.eye(world.d)
    return mean, cov


def exact_posterior_score(world: GaussianWorld, schedule: Schedule,
                          xt: np.ndarray, y: np.ndarray, t: float):
    """Measurement-aware score two ways: assembled and direct.

    The assembled form combines anchor, state, and the corrected conditional
    mean with the bridge variances; the direct form differentiates the
    closed-form Gaussian log-density of the state marginal.  Equality is the
    executable version of the score derivation.
    """
    if not 0 < t < schedule.horizon:
        raise DomainError("score is degenerate at the endpoints")
    xt = np.asarray(xt, dtype=float)
    s2, s2b, tot = _mixture_coeffs(schedule, t)
    x0p = exact_x0p(world, schedule, xt, y, t)
    assembled = world.x_fbp / s2b - (tot / (s2 * s2b)) * xt + x0p / s2
    mean, cov = forward_marginal_moments(world, schedule, y, t)
    direct = -np.linalg.solve(cov, xt - mean)
    return assembled, direct


def image_domain_score(world: GaussianWorld, schedule: Schedule,
                       xt: np.ndarray, t: float):
    """Measurement-free score two ways, for the y-independent check."""
    if not 0 < t < schedule.horizon:
        raise DomainError("score is degenerate at the endpoints")
    xt = np.asarray(xt, dtype=float)
    s2, s2b, tot = _mixture_coeffs(schedule, t)
    x0hat, _ = _cond_mean_cov(world, schedule, xt, t)
    assembled = world.x_fbp / s2b - (tot / (s2 * s2b)) * xt + x0hat / s2
    alpha = s2b / tot
    mean = alpha * world.prior_mean() + (s2 / tot) * world.x_fbp
    var = alpha * alpha * world.sigma_x2 + s2 * s2b / tot
    direct = -(xt - mean) / var
    return assembled, direct


@dataclass(frozen=True)
class ChainMoments:
    """Exact law of the discretized reverse chain at each grid time."""

    times: tuple
    means: tuple
    covs: tuple
    _index: dict = field(repr=False, default_factory=dict)

    def at(self, t: float):
        key = float(t)
        if key not in self._index:
            raise DomainError(f"time {t} not on the chain grid")
        i = self._index[key]
        return self.means[i], self.covs[i]


def discrete_chain_moments(world: GaussianWorld, schedule: Schedule,
                           grid: TimeGrid, y: np.ndarray,
                           gamma: float = float("inf")) -> ChainMoments:
    """Propagate the sampler's affine recursion exactly, no Monte Carlo.

    With the exact predictor and a converged consistency solve, each
    reverse step is an affine-plus-Gaussian map of the state, so the chain
    law stays Gaussian and its moments follow by direct propagation.  The
    gap between these and forward_marginal_moments is pure discretization
    error, which is what the grid-refinement checks measure.
    """
    from .bridge import step_coeffs  # cycle-free: bridge does not import here

    y = np.asarray(y, dtype=float)
    d = world.d
    eye = np.eye(d)
    k_of = {}
    mean = world.x_fbp.copy()
    cov = np.zeros((d, d))
    times = [grid.times[0]]
    means = [mean.copy()]
    covs = [cov.copy()]
    for _, t, t_prev in grid.step_pairs():
        s2, s2b, tot = _mixture_coeffs(schedule, t)
        cscale = world.sigma_x2 * s2 * tot / (s2 * tot + s2b * world.sigma_x2)
        # x0hat = W xt + u
        w_hat = (cscale / s2) * eye
        u_hat = cscale * (world.prior_mean() / world.sigma_x2
                          - (world.x_fbp / tot))
        k = k_of.setdefault(t, kx_time_varying(schedule, t, world.sigma_x2,
                                               world.sigma_y2))
        g = np.linalg.inv(world.a.T @ world.a + k * eye)
        # x0p = G (A'y + k x0hat) = (k G W) xt + G (A'y + k u)
        w_p = k * g @ w_hat
        u_p = g @ (world.a.T @ y + k * u_hat)
        c = step_coeffs(schedule, t, t_prev, gamma=gamma)
        m_step = c.a * w_p + c.b * eye
        offset = c.a * u_p + c.c * world.x_fbp
        mean = m_step @ mean + offset
        cov = m_step @ cov @ m_step.T + (c.eta ** 2) * eye
        times.append(t_prev)
        means.append(mean.copy())
        covs.append(cov.copy())
    index = {float(tv): i for i, tv in enumerate(times)}
    return ChainMoments(tuple(times), tuple(means), tuple(covs), index)
