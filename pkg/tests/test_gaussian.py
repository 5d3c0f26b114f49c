"""Linear-Gaussian oracle worlds: closed forms vs brute-force conditioning."""

import os

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from ctbridge.bridge import (DC_TIME_VARYING, ETA_MAX, SamplerConfig,
                             run_ensemble, run_sampler)
from ctbridge.errors import DomainError
from ctbridge.gaussian import (GaussianWorld, cond_moments_x0_given_xt,
                               discrete_chain_moments, exact_posterior_score,
                               exact_x0p, forward_marginal_moments,
                               gaussian_bayes, image_domain_score,
                               make_gaussian_predictor, posterior_x0,
                               schur_conditional)
from ctbridge.linop import matrix_operator
from ctbridge.schedule import Schedule, make_time_grid

SEED_FILE = os.path.join(os.path.dirname(__file__), "gaussian_world_seeds.txt")


def world_seeds():
    with open(SEED_FILE) as fh:
        return [int(line) for line in fh
                if line.strip() and not line.startswith("#")]


def random_world(seed, d=1, n=1):
    rng = np.random.default_rng(seed)
    return GaussianWorld(
        a=rng.normal(size=(n, d)),
        z_matrix=np.eye(d) + 0.2 * rng.normal(size=(d, d)),
        z_offset=0.3 * rng.normal(size=d),
        sigma_x2=float(rng.uniform(0.3, 2.0)),
        sigma_y2=float(rng.uniform(0.02, 0.5)),
        x_fbp=rng.normal(size=d),
    )


def random_measurement(world, seed):
    rng = np.random.default_rng(seed + 1000)
    return world.a @ rng.normal(size=world.d) + 0.1 * rng.normal(size=world.n)


SCHEDULES = [Schedule.i2sb(), Schedule.ddbm_ve()]


class TestBayesConditioning:
    """Information-form conditioning agrees with Schur-complement conditioning."""

    @pytest.mark.parametrize("dims", [(2, 3), (4, 2), (8, 8), (1, 1)])
    def test_matches_schur(self, dims):
        d1, d2 = dims
        for seed in world_seeds():
            rng = np.random.default_rng(seed)
            mu1 = rng.normal(size=d1)
            l1 = rng.normal(size=(d1, d1))
            cov1 = l1 @ l1.T + 0.2 * np.eye(d1)
            m = rng.normal(size=(d2, d1))
            mu2 = rng.normal(size=d2)
            l2 = rng.normal(size=(d2, d2))
            cov2 = l2 @ l2.T + 0.2 * np.eye(d2)
            z2 = rng.normal(size=d2)
            mean_a, cov_a = gaussian_bayes(mu1, cov1, m, mu2, cov2, z2)
            mean_b, cov_b = schur_conditional(mu1, cov1, m, mu2, cov2, z2)
            assert np.allclose(mean_a, mean_b, atol=1e-10, rtol=1e-10)
            assert np.allclose(cov_a, cov_b, atol=1e-10, rtol=1e-10)

    def test_scalar_hand_value(self):
        # prior N(0,1), observe z2 = z1 + e with unit noise, z2 = 2:
        # posterior N(1, 1/2).
        mean, cov = gaussian_bayes([0.0], [[1.0]], [[1.0]], [0.0], [[1.0]], [2.0])
        assert mean[0] == pytest.approx(1.0, abs=1e-14)
        assert cov[0, 0] == pytest.approx(0.5, abs=1e-14)


class TestWorldValidation:
    def test_dimension_properties(self):
        w = random_world(3, d=4, n=2)
        assert (w.d, w.n) == (4, 2)
        assert w.prior_mean().shape == (4,)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DomainError):
            GaussianWorld(a=np.eye(3), z_matrix=np.eye(2),
                          z_offset=np.zeros(3), sigma_x2=1.0, sigma_y2=1.0,
                          x_fbp=np.zeros(3))

    def test_nonpositive_variances_rejected(self):
        for sx, sy in [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)]:
            with pytest.raises(DomainError):
                GaussianWorld(a=np.eye(2), z_matrix=np.eye(2),
                              z_offset=np.zeros(2), sigma_x2=sx, sigma_y2=sy,
                              x_fbp=np.zeros(2))

    def test_size_cap(self):
        with pytest.raises(DomainError):
            random_world(0, d=65, n=2)


class TestCondMoments:
    @pytest.mark.parametrize("schedule", SCHEDULES)
    def test_endpoints_rejected(self, schedule):
        w = random_world(3)
        for t in (0.0, schedule.horizon):
            with pytest.raises(DomainError):
                cond_moments_x0_given_xt(w, schedule, w.x_fbp, t)

    def test_tight_prior_pins_mean_to_prior(self):
        """An infinitely confident prior ignores the state entirely."""
        rng = np.random.default_rng(0)
        w = GaussianWorld(a=np.eye(2), z_matrix=np.eye(2) * 0.7,
                          z_offset=np.array([0.1, -0.4]), sigma_x2=1e-12,
                          sigma_y2=0.1, x_fbp=np.array([1.0, 2.0]))
        s = Schedule.ddbm_ve()
        xt = rng.normal(size=2)
        mean, cov = cond_moments_x0_given_xt(w, s, xt, 0.4 * s.horizon)
        assert np.allclose(mean, w.prior_mean(), atol=1e-6)
        assert cov < 1e-10

    @pytest.mark.parametrize("schedule", SCHEDULES)
    def test_small_time_pins_mean_to_state(self, schedule):
        w = random_world(5, d=3, n=3)
        xt = np.array([0.3, -1.1, 0.6])
        mean, _ = cond_moments_x0_given_xt(w, schedule, xt,
                                           1e-6 * schedule.horizon)
        assert np.allclose(mean, xt, atol=1e-4)

    def test_scalar_mean_maximizes_log_posterior(self):
        """The Gaussian conditional mean is its mode; a brute-force
        maximizer over the 1-D log-posterior must land on it."""
        s = Schedule.ddbm_ve()
        for seed in world_seeds():
            w = random_world(seed)
            rng = np.random.default_rng(seed + 7)
            t = float(rng.uniform(0.1, 0.9)) * s.horizon
            xt = float(rng.normal())
            mean, _ = cond_moments_x0_given_xt(w, s, np.array([xt]), t)
            s2, s2b = s.sigma2(t), s.sigma2_bar(t)
            tot = s.total_variance
            z = w.prior_mean()[0]

            def neg_log_post(x0):
                prior = (x0 - z) ** 2 / (2 * w.sigma_x2)
                resid = xt - (s2b / tot) * x0 - (s2 / tot) * w.x_fbp[0]
                like = resid ** 2 / (2 * s2 * s2b / tot)
                return prior + like

            res = minimize_scalar(neg_log_post, bounds=(-50, 50),
                                  method="bounded",
                                  options={"xatol": 1e-10})
            assert abs(res.x - mean[0]) < 1e-6

    @pytest.mark.parametrize("schedule", SCHEDULES)
    def test_matches_generic_conditioning(self, schedule):
        """Mean and covariance agree with the generic Gaussian conditional
        applied to prior N(Z, sx I) and mixture likelihood."""
        w = random_world(11, d=3, n=2)
        t = 0.37 * schedule.horizon
        rng = np.random.default_rng(2)
        xt = rng.normal(size=3)
        mean, cov = cond_moments_x0_given_xt(w, schedule, xt, t)
        s2, s2b = schedule.sigma2(t), schedule.sigma2_bar(t)
        tot = schedule.total_variance
        gmean, gcov = gaussian_bayes(
            w.prior_mean(), w.sigma_x2 * np.eye(3),
            (s2b / tot) * np.eye(3), (s2 / tot) * w.x_fbp,
            (s2 * s2b / tot) * np.eye(3), xt)
        assert np.allclose(mean, gmean, atol=1e-12)
        assert np.allclose(cov * np.eye(3), gcov, atol=1e-12)

    def test_predictor_shares_code_path(self):
        w = random_world(13, d=4, n=3)
        s = Schedule.i2sb()
        predictor = make_gaussian_predictor(w, s)
        rng = np.random.default_rng(1)
        xt = rng.normal(size=4)
        t = 0.62 * s.horizon
        mean, _ = cond_moments_x0_given_xt(w, s, xt, t)
        assert np.array_equal(predictor(xt, t, w.x_fbp), mean)

    def test_predictor_batches(self):
        w = random_world(13, d=4, n=3)
        s = Schedule.i2sb()
        predictor = make_gaussian_predictor(w, s)
        rng = np.random.default_rng(1)
        batch = rng.normal(size=(5, 4))
        t = 0.3 * s.horizon
        out = predictor(batch, t, w.x_fbp)
        assert out.shape == (5, 4)
        for i in range(5):
            assert np.allclose(out[i], predictor(batch[i], t, w.x_fbp),
                               atol=1e-14)

    def test_predictor_defined_at_horizon(self):
        """The sampler's first step evaluates at t = T, where the formula
        is regular even though the conditional itself is degenerate."""
        w = random_world(17, d=2, n=2)
        s = Schedule.ddbm_ve()
        predictor = make_gaussian_predictor(w, s)
        out = predictor(w.x_fbp, s.horizon, w.x_fbp)
        assert np.allclose(out, w.prior_mean(), atol=1e-12)


class TestExactX0p:
    def test_null_measurement_returns_prediction(self):
        w = GaussianWorld(a=np.zeros((2, 3)), z_matrix=np.eye(3),
                          z_offset=np.zeros(3), sigma_x2=0.8, sigma_y2=0.2,
                          x_fbp=np.array([0.5, -1.0, 2.0]))
        s = Schedule.ddbm_ve()
        t = 0.5 * s.horizon
        xt = np.array([0.1, 0.2, 0.3])
        x0hat, _ = cond_moments_x0_given_xt(w, s, xt, t)
        out = exact_x0p(w, s, xt, np.zeros(2), t)
        assert np.allclose(out, x0hat, atol=1e-12)

    def test_noiseless_identity_returns_measurement(self):
        w = GaussianWorld(a=np.eye(3), z_matrix=np.eye(3),
                          z_offset=np.zeros(3), sigma_x2=1.0, sigma_y2=1e-14,
                          x_fbp=np.zeros(3))
        s = Schedule.i2sb()
        y = np.array([1.0, -2.0, 0.5])
        out = exact_x0p(w, s, np.array([0.2, 0.2, 0.2]), y, 0.5)
        assert np.allclose(out, y, atol=1e-6)

    @pytest.mark.parametrize("schedule", SCHEDULES)
    def test_equals_full_conditional_mean(self, schedule):
        """The weighted normal-equation solve is exactly E[X0 | X_t, y]
        under the joint Gaussian, checked by stacking (X_t, y) into one
        observation and conditioning via the Schur complement."""
        for seed in world_seeds():
            w = random_world(seed, d=4, n=2)
            rng = np.random.default_rng(seed + 50)
            t = float(rng.uniform(0.15, 0.85)) * schedule.horizon
            xt = rng.normal(size=4)
            y = random_measurement(w, seed)
            s2, s2b = schedule.sigma2(t), schedule.sigma2_bar(t)
            tot = schedule.total_variance
            m = np.vstack([(s2b / tot) * np.eye(4), w.a])
            mu2 = np.concatenate([(s2 / tot) * w.x_fbp, np.zeros(2)])
            cov2 = np.zeros((6, 6))
            cov2[:4, :4] = (s2 * s2b / tot) * np.eye(4)
            cov2[4:, 4:] = w.sigma_y2 * np.eye(2)
            z2 = np.concatenate([xt, y])
            ref, _ = schur_conditional(w.prior_mean(),
                                       w.sigma_x2 * np.eye(4), m, mu2, cov2,
                                       z2)
            out = exact_x0p(w, schedule, xt, y, t)
            assert np.allclose(out, ref, atol=1e-8)

    def test_time_domain(self):
        w = random_world(3)
        s = Schedule.i2sb()
        with pytest.raises(DomainError):
            exact_x0p(w, s, np.zeros(1), np.zeros(1), 0.0)


class TestForwardMarginals:
    def test_horizon_is_anchor_point_mass(self):
        w = random_world(5, d=3, n=2)
        s = Schedule.ddbm_ve()
        y = random_measurement(w, 5)
        mean, cov = forward_marginal_moments(w, s, y, s.horizon)
        assert np.array_equal(mean, w.x_fbp)
        assert np.all(cov == 0.0)

    def test_time_zero_is_posterior(self):
        w = random_world(7, d=3, n=2)
        s = Schedule.i2sb()
        y = random_measurement(w, 7)
        mean, cov = forward_marginal_moments(w, s, y, 0.0)
        pmean, pcov = posterior_x0(w, y)
        assert np.allclose(mean, pmean, atol=1e-14)
        assert np.allclose(cov, pcov, atol=1e-14)

    def test_scalar_midpoint_matches_monte_carlo(self):
        """Sample the clean image from its posterior, push it through the
        forward mixture, and compare moments within 4 standard errors."""
        w = random_world(11)
        s = Schedule.ddbm_ve()
        y = random_measurement(w, 11)
        t = 0.5 * s.horizon
        mean, cov = forward_marginal_moments(w, s, y, t)
        pmean, pcov = posterior_x0(w, y)
        rng = np.random.default_rng(99)
        n = 100_000
        x0 = pmean[0] + np.sqrt(pcov[0, 0]) * rng.standard_normal(n)
        s2, s2b = s.sigma2(t), s.sigma2_bar(t)
        tot = s.total_variance
        xt = ((s2b / tot) * x0 + (s2 / tot) * w.x_fbp[0]
              + np.sqrt(s2 * s2b / tot) * rng.standard_normal(n))
        se_mean = xt.std(ddof=1) / np.sqrt(n)
        assert abs(xt.mean() - mean[0]) < 4 * se_mean
        var = xt.var(ddof=1)
        se_var = var * np.sqrt(2.0 / (n - 1))
        assert abs(var - cov[0, 0]) < 4 * se_var

    def test_time_outside_bridge_rejected(self):
        w = random_world(3)
        s = Schedule.i2sb()
        with pytest.raises(DomainError):
            forward_marginal_moments(w, s, np.zeros(1), -0.1)


class TestPosteriorScore:
    @pytest.mark.parametrize("schedule", SCHEDULES)
    def test_assembly_matches_direct_gradient_scalar(self, schedule):
        for seed in world_seeds():
            w = random_world(seed)
            rng = np.random.default_rng(seed + 3)
            y = random_measurement(w, seed)
            for frac in (0.2, 0.5, 0.8):
                t = frac * schedule.horizon
                xt = np.array([float(rng.normal())])
                assembled, direct = exact_posterior_score(w, schedule, xt, y, t)
                assert np.allclose(assembled, direct, atol=1e-8)

    def test_assembly_matches_direct_gradient_d8(self):
        w = random_world(13, d=8, n=5)
        s = Schedule.i2sb()
        y = random_measurement(w, 13)
        rng = np.random.default_rng(4)
        xt = rng.normal(size=8)
        assembled, direct = exact_posterior_score(w, s, xt, y, 0.44)
        assert np.allclose(assembled, direct, atol=1e-8)

    def test_zero_at_marginal_mean(self):
        w = random_world(7, d=3, n=2)
        s = Schedule.ddbm_ve()
        y = random_measurement(w, 7)
        t = 0.6 * s.horizon
        mean, _ = forward_marginal_moments(w, s, y, t)
        assembled, direct = exact_posterior_score(w, s, mean, y, t)
        assert np.allclose(direct, 0.0, atol=1e-10)
        assert np.allclose(assembled, 0.0, atol=1e-8)

    def test_null_measurement_reduces_to_image_domain_score(self):
        w = GaussianWorld(a=np.zeros((2, 3)), z_matrix=0.5 * np.eye(3),
                          z_offset=np.full(3, 0.2), sigma_x2=0.7,
                          sigma_y2=0.3, x_fbp=np.array([1.0, 0.0, -1.0]))
        s = Schedule.ddbm_ve()
        rng = np.random.default_rng(8)
        xt = rng.normal(size=3)
        t = 0.45 * s.horizon
        with_y, _ = exact_posterior_score(w, s, xt, np.zeros(2), t)
        image_only, image_direct = image_domain_score(w, s, xt, t)
        assert np.allclose(with_y, image_only, atol=1e-10)
        assert np.allclose(image_only, image_direct, atol=1e-8)

    def test_endpoints_rejected(self):
        w = random_world(3)
        s = Schedule.i2sb()
        with pytest.raises(DomainError):
            exact_posterior_score(w, s, np.zeros(1), np.zeros(1), s.horizon)


class TestChainMoments:
    """The analytically propagated reverse chain against the forward law."""

    def _discrepancy(self, world, schedule, y, n_steps, gamma=1.0):
        grid = make_time_grid(schedule, n_steps)
        chain = discrete_chain_moments(world, schedule, grid, y, gamma=gamma)
        total = 0.0
        for t in (float(grid.times[grid.n_steps // 2]), 0.0):
            cmean, ccov = chain.at(t)
            fmean, fcov = forward_marginal_moments(world, schedule, y, t)
            total += np.linalg.norm(cmean - fmean)
            total += np.linalg.norm(ccov - fcov)
        return total

    @pytest.mark.parametrize("schedule", SCHEDULES)
    def test_refinement_shrinks_discrepancy_scalar(self, schedule):
        """At unit noise scale (the exact one-step bridge kernel) the only
        marginal error is the plugged-in point prediction, which fades with
        grid refinement on every seeded scalar world."""
        for seed in world_seeds():
            w = random_world(seed)
            y = random_measurement(w, seed)
            d25 = self._discrepancy(w, schedule, y, 25)
            d100 = self._discrepancy(w, schedule, y, 100)
            d400 = self._discrepancy(w, schedule, y, 400)
            assert d25 > d100 > d400
            assert d400 < 0.25 * d25

    def test_refinement_shrinks_discrepancy_d16(self):
        w = random_world(29, d=16, n=8)
        s = Schedule.ddbm_ve()
        y = random_measurement(w, 29)
        d25 = self._discrepancy(w, s, y, 25)
        d400 = self._discrepancy(w, s, y, 400)
        assert d400 < 0.25 * d25

    @pytest.mark.parametrize("gamma", [0.0, 1.0, ETA_MAX])
    def test_chain_mean_is_exact_at_every_gamma(self, gamma):
        """The step coefficients compose so that with an exact predictor the
        chain mean telescopes onto the forward marginal mean at every grid
        time, independent of the noise split."""
        w = random_world(7)
        s = Schedule.i2sb()
        y = random_measurement(w, 7)
        grid = make_time_grid(s, 30)
        chain = discrete_chain_moments(w, s, grid, y, gamma=gamma)
        for t in chain.times:
            cmean, _ = chain.at(t)
            fmean, _ = forward_marginal_moments(w, s, y, float(t))
            assert np.allclose(cmean, fmean, atol=1e-12)

    def test_fine_chain_lands_on_posterior(self):
        w = random_world(5)
        s = Schedule.ddbm_ve()
        y = random_measurement(w, 5)
        grid = make_time_grid(s, 800)
        chain = discrete_chain_moments(w, s, grid, y, gamma=1.0)
        cmean, ccov = chain.at(0.0)
        pmean, pcov = posterior_x0(w, y)
        scale = abs(pmean[0]) + np.sqrt(pcov[0, 0])
        assert abs(cmean[0] - pmean[0]) < 0.02 * scale
        assert abs(ccov[0, 0] - pcov[0, 0]) < 0.05 * pcov[0, 0]

    def test_unknown_time_rejected(self):
        w = random_world(3)
        s = Schedule.i2sb()
        grid = make_time_grid(s, 4)
        chain = discrete_chain_moments(w, s, grid, np.zeros(1))
        with pytest.raises(DomainError):
            chain.at(0.123456)


class TestSamplerAgainstChain:
    """The production sampler realizes exactly the law the chain predicts."""

    def test_deterministic_sampler_equals_chain_mean(self):
        w = random_world(7, d=4, n=3)
        s = Schedule.i2sb()
        y = random_measurement(w, 7)
        grid = make_time_grid(s, 12)
        cfg = SamplerConfig(schedule=s, grid=grid, gamma=0.0,
                            dc_mode=DC_TIME_VARYING, sigma_x2=w.sigma_x2,
                            sigma_y2=w.sigma_y2, cg_iters=16)
        out = run_sampler(y, matrix_operator(w.a), w.x_fbp,
                          make_gaussian_predictor(w, s), cfg)
        chain = discrete_chain_moments(w, s, grid, y, gamma=0.0)
        cmean, ccov = chain.at(0.0)
        assert np.allclose(out, cmean, atol=1e-9)
        assert np.allclose(ccov, 0.0, atol=1e-18)

    def test_stochastic_ensemble_matches_chain_moments(self):
        """Ensemble moments agree with the analytic chain law within
        Monte Carlo error; this pins the noise wiring, not just the mean."""
        w = random_world(11)
        s = Schedule.ddbm_ve()
        y = random_measurement(w, 11)
        grid = make_time_grid(s, 25)
        cfg = SamplerConfig(schedule=s, grid=grid, gamma=ETA_MAX,
                            dc_mode=DC_TIME_VARYING, sigma_x2=w.sigma_x2,
                            sigma_y2=w.sigma_y2, cg_iters=8, seed=21)
        n = 4000
        samples = run_ensemble(y, matrix_operator(w.a), w.x_fbp,
                               make_gaussian_predictor(w, s), cfg, n)
        chain = discrete_chain_moments(w, s, grid, y)
        cmean, ccov = chain.at(0.0)
        se_mean = samples.std(ddof=1) / np.sqrt(n)
        assert abs(samples.mean() - cmean[0]) < 5 * se_mean
        var = samples.var(ddof=1)
        se_var = var * np.sqrt(2.0 / (n - 1))
        assert abs(var - ccov[0, 0]) < 5 * se_var
