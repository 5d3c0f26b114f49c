"""Self-contained correctness battery behind the ``verify`` CLI verb.

Small, fast spot checks of the load-bearing math: operator adjointness,
step-coefficient identities, Gaussian conditioning against a joint-
covariance oracle, the data-consistency solve against a dense solve, and
the noise model's variance.  The pytest suite is the full oracle set;
this battery is the field diagnostic that needs no test files installed.
"""

from __future__ import annotations

import numpy as np

from .consistency import DCProblem, solve_dc
from .gaussian import GaussianWorld, gaussian_bayes, schur_conditional
from .geometry import (desk_geometry, full_mask, limited_angle_mask,
                       sparse_view_mask, truncated_mask)
from .linop import matrix_operator
from .projector import FanBeamProjector
from .rng import stream
from .schedule import Schedule
from .sinoproc import NoiseModel, add_noise


_VERIFY_DOMAIN = 0x55


def _check_adjoint():
    geometry = desk_geometry(image_size=32, n_views=24)
    masks = [full_mask(geometry), sparse_view_mask(geometry, 4),
             limited_angle_mask(geometry, 150.0),
             truncated_mask(geometry, 0.6)]
    rng = stream(_VERIFY_DOMAIN, 0)
    worst = 0.0
    for mask in masks:
        proj = FanBeamProjector(geometry, mask)
        for _ in range(3):
            x = rng.standard_normal((32, 32))
            y = rng.standard_normal(mask.sinogram_shape())
            lhs = float(np.vdot(proj.forward(x), y))
            rhs = float(np.vdot(x, proj.adjoint(y)))
            scale = abs(lhs) + abs(rhs) + 1.0
            worst = max(worst, abs(lhs - rhs) / scale)
    return worst < 1e-10, f"max relative adjoint gap {worst:.3e}"


def _check_step_identities():
    from .bridge import step_coeffs
    worst = 0.0
    for schedule in (Schedule.i2sb(), Schedule.ddbm_ve()):
        tot = schedule.total_variance
        horizon = schedule.horizon
        for frac_t, frac_p in ((1.0, 0.8), (0.7, 0.4), (0.3, 0.0)):
            t, t_prev = frac_t * horizon, frac_p * horizon
            for gamma in (0.0, 1.0, 3.0, float("inf")):
                co = step_coeffs(schedule, t, t_prev, gamma=gamma)
                s2t, s2bt = schedule.sigma2(t), schedule.sigma2_bar(t)
                s2p, s2bp = schedule.sigma2(t_prev), schedule.sigma2_bar(t_prev)
                worst = max(
                    worst,
                    abs(co.a + co.b * s2bt / tot - s2bp / tot),
                    abs(co.c + co.b * s2t / tot - s2p / tot),
                    abs(co.a + co.b + co.c - 1.0))
                if gamma > 0 or s2bt > 0:
                    # noise plus retained state reproduce the bridge variance;
                    # the one exception is the deterministic step off the
                    # pinned anchor, which has no noise to inherit or inject
                    worst = max(worst, abs(
                        co.eta ** 2 + co.b ** 2 * s2t * s2bt / tot
                        - s2p * s2bp / tot))
                if gamma == 0.0 and co.eta != 0.0:
                    return False, "gamma 0 must give eta exactly 0"
                if frac_t == 1.0 and co.b != 0.0:
                    return False, "horizon step must drop the state exactly"
    return worst < 1e-12, f"max identity residual {worst:.3e}"


def _check_conditioning():
    rng = stream(_VERIFY_DOMAIN, 1)
    world = GaussianWorld(
        a=rng.standard_normal((2, 3)),
        z_matrix=np.eye(3) + 0.2 * rng.standard_normal((3, 3)),
        z_offset=0.3 * rng.standard_normal(3),
        sigma_x2=1.3, sigma_y2=0.2,
        x_fbp=rng.standard_normal(3))
    y = world.a @ rng.standard_normal(3) + 0.1 * rng.standard_normal(2)
    mu1 = world.prior_mean()
    cov1 = world.sigma_x2 * np.eye(3)
    cov2 = world.sigma_y2 * np.eye(2)
    mean_b, cov_b = gaussian_bayes(mu1, cov1, world.a, np.zeros(2), cov2, y)
    mean_s, cov_s = schur_conditional(mu1, cov1, world.a, np.zeros(2), cov2, y)
    gap = max(float(np.max(np.abs(mean_b - mean_s))),
              float(np.max(np.abs(cov_b - cov_s))))
    return gap < 1e-10, f"information vs joint-covariance gap {gap:.3e}"


def _check_dc_solve():
    rng = stream(_VERIFY_DOMAIN, 2)
    a = rng.standard_normal((6, 8))
    y = rng.standard_normal(6)
    x0 = rng.standard_normal(8)
    weight = 0.7
    problem = DCProblem(y, x0, weight, cg_iters=50)
    got = solve_dc(problem, matrix_operator(a)).x
    want = np.linalg.solve(a.T @ a + weight * np.eye(8),
                           a.T @ y + weight * x0)
    gap = float(np.max(np.abs(got - want)))
    return gap < 1e-8, f"CG vs dense gap {gap:.3e}"


def _check_noise_variance():
    p = 1.5
    n_air = 1.0e4
    y = np.full(200_000, p)
    noisy = add_noise(y, NoiseModel(n_air=n_air, seed=123))
    got = float(np.var(noisy - y))
    want = np.exp(p) / n_air
    rel = abs(got - want) / want
    return rel < 0.02, f"variance relative error {rel:.3%}"


CHECKS = (
    ("projector_adjoint", _check_adjoint),
    ("step_coefficient_identities", _check_step_identities),
    ("gaussian_conditioning", _check_conditioning),
    ("data_consistency_solve", _check_dc_solve),
    ("noise_variance", _check_noise_variance),
)


def run_verification():
    """Run every check; returns [(name, passed, detail)]."""
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:   # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
