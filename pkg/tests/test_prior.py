import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from simprior import prior as pr
from simprior.errors import DegenerateDistributionError, InvalidInputError
from simprior.physics import EnvironmentSetting, LatentBounds, Role
from simprior.policy import InteractionCounter


class TestSampling:
    def test_single_point_in_unit_square(self):
        b = LatentBounds((0.0, 0.0), (1.0, 1.0))
        x = pr.sample_latents(1, b, 50)
        assert x.shape == (1, 2) and b.contains(x[0])
        np.testing.assert_array_equal(x, pr.sample_latents(1, b, 50))

    def test_membership(self):
        x = pr.sample_latents(500, LatentBounds(), 3)
        assert np.all(x >= 0.0) and np.all(x[:, 0] <= 3.0) and np.all(x[:, 1] <= 1.0)

    def test_mean_within_three_standard_errors(self):
        b = LatentBounds()
        x = pr.sample_latents(10_000, b, 9)
        se = b.width / math.sqrt(12.0) / math.sqrt(len(x))
        assert np.all(np.abs(x.mean(axis=0) - b.midpoint) < 3 * se)

    def test_seeds_differ(self):
        assert not np.array_equal(pr.sample_latents(3, LatentBounds(), 1), pr.sample_latents(3, LatentBounds(), 2))

    def test_n_validated(self):
        with pytest.raises(InvalidInputError):
            pr.sample_latents(0, LatentBounds(), 0)

    def test_settings_are_simulated(self):
        envs = pr.sample_settings(2000, LatentBounds(), 4)
        assert all(e.role is Role.SIMULATED and e.damping == 0.0 for e in envs)
        lat = np.array([e.latent for e in envs])
        assert LatentBounds().contains(lat.min(axis=0)) and LatentBounds().contains(lat.max(axis=0))
        se = LatentBounds().width / math.sqrt(12.0 * len(lat))
        assert np.all(np.abs(lat.mean(axis=0) - LatentBounds().midpoint) < 3 * se)
        assert envs == pr.sample_settings(2000, LatentBounds(), 4)


class TestKolmogorov:
    @pytest.mark.parametrize("lam", [0.3, 0.6, 0.8, 1.0, 1.224, 1.5, 2.5])
    def test_series_matches_scipy(self, lam):
        assert pr.kolmogorov_sf(lam) == pytest.approx(stats.kstwobign.sf(lam), abs=1e-9)

    def test_ten_percent_critical_value(self):
        p = pr.ks_pvalue(0.121, 100)
        assert 0.08 <= p <= 0.12

    def test_pvalue_clamped(self):
        # truncating at terms below 1e-10 leaves an error of that order
        assert pr.kolmogorov_sf(0.01) == pytest.approx(1.0, abs=1e-9)
        assert pr.kolmogorov_sf(0.0) == 1.0
        assert pr.ks_pvalue(1.0, 1000) == 0.0


class TestKsTest:
    def test_quantile_samples_minimal_discrepancy(self):
        n = 50
        x = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n, loc=2.0, scale=3.0)
        D, p = pr.ks_test(x, 2.0, 9.0)
        assert D == pytest.approx(0.5 / n, abs=1e-12)
        assert p == pytest.approx(1.0, abs=1e-9)

    def test_statistic_matches_scipy(self, gen):
        x = gen.normal(0.3, 1.7, size=40)
        D, _ = pr.ks_test(x, 0.0, 4.0)
        assert D == pytest.approx(stats.kstest(x, "norm", args=(0.0, 2.0)).statistic, abs=1e-12)

    def test_constant_samples_degenerate(self):
        with pytest.raises(DegenerateDistributionError):
            pr.ks_test([1.0, 1.0, 1.0], 1.0, 0.0)

    def test_needs_three_samples(self):
        with pytest.raises(InvalidInputError):
            pr.ks_test([1.0, 2.0], 1.5, 0.5)

    @settings(max_examples=100, deadline=None)
    @given(c=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
    def test_scale_invariance(self, c, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=12)
        mu, var = float(x.mean()), float(x.var(ddof=1))
        D0, p0 = pr.ks_test(x, mu, var)
        D1, p1 = pr.ks_test(c * x, c * mu, (c * math.sqrt(var)) ** 2)
        assert abs(D1 - D0) < 1e-12
        assert abs(p1 - p0) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(shift=st.floats(-1e3, 1e3), seed=st.integers(0, 1000))
    def test_translation_invariance(self, shift, seed):
        # shifting costs a few ulps of |shift| in the standardized residuals
        rng = np.random.default_rng(seed)
        x = rng.normal(size=12)
        mu, var = float(x.mean()), float(x.var(ddof=1))
        D0, p0 = pr.ks_test(x, mu, var)
        D1, p1 = pr.ks_test(x + shift, mu + shift, var)
        assert abs(D1 - D0) < 1e-9
        assert abs(p1 - p0) < 1e-9


class TestPriorConfig:
    @pytest.mark.parametrize("kw", [dict(N=0), dict(E=2), dict(gamma=1.0), dict(gamma=-0.1), dict(eval_top_k=0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidInputError):
            pr.PriorConfig(**kw)


class TestBuildPrior:
    @pytest.fixture(scope="class")
    @classmethod
    def built(cls, small_table, small_tasks):
        counter = InteractionCounter()
        cfg = pr.PriorConfig(N=12, E=5, gamma=0.1, eval_top_k=5)
        return pr.build_prior(small_table, small_tasks.fold("train"), cfg, 0, counter), counter

    def test_all_records_returned(self, built):
        prior, _ = built
        assert len(prior) == 12

    def test_kept_invariant(self, built):
        prior, _ = built
        for p in prior:
            assert p.kept == (p.var > 0.0 and p.p_value >= 0.1)
            assert 0.0 <= p.p_value <= 1.0 and p.var >= 0.0

    def test_never_touches_real_world(self, built):
        _, counter = built
        assert counter.real == 0
        assert counter.simulated > 0

    def test_deterministic(self, built, small_table, small_tasks):
        again = pr.build_prior(small_table, small_tasks.fold("train"), pr.PriorConfig(N=12, E=5), 0)
        assert again == built[0]

    def test_identical_settings_keep_nothing(self, small_table, small_tasks):
        env = EnvironmentSetting.simulated((1.0, 0.5))
        prior = pr.build_prior(small_table, small_tasks.fold("train"), pr.PriorConfig(N=6, E=3), 0,
                               settings=[env, env, env])
        assert all(p.var == 0.0 and not p.kept for p in prior)

    def test_gamma_zero_keeps_all_with_spread(self, small_table, small_tasks):
        prior = pr.build_prior(small_table, small_tasks.fold("train"), pr.PriorConfig(N=12, E=5, gamma=0.0), 0)
        assert [p.kept for p in prior] == [p.var > 0.0 for p in prior]

    def test_real_settings_rejected(self, small_table, small_tasks):
        real = EnvironmentSetting.real((1.0, 0.5), 0.8)
        with pytest.raises(InvalidInputError):
            pr.build_prior(small_table, small_tasks.fold("train"), pr.PriorConfig(N=2, E=3), 0,
                           settings=[real] * 3)

    def test_moments_by_hand(self, small_table, small_tasks):
        from simprior.policy import condition, evaluate
        cfg = pr.PriorConfig(N=3, E=4)
        prior = pr.build_prior(small_table, small_tasks.fold("train"), cfg, 5)
        envs = pr.sample_settings(4, cfg.bounds, 5)
        for p in prior:
            ys = [evaluate(condition(small_table, p.x), small_tasks.fold("train"), e, 5).objective for e in envs]
            assert p.mean == pytest.approx(sum(ys) / 4)
            assert p.var == pytest.approx(sum((y - p.mean) ** 2 for y in ys) / 3)

    def test_csv_roundtrip(self, built, tmp_path):
        prior, _ = built
        pr.write_prior(tmp_path / "p.csv", prior, 2)
        assert (tmp_path / "p.csv").read_text().splitlines()[0] == "theta_1,theta_2,mu,var,p_value,kept"
        assert pr.read_prior(tmp_path / "p.csv") == prior

    def test_bad_header(self, tmp_path):
        (tmp_path / "p.csv").write_text("a,b\n")
        with pytest.raises(InvalidInputError):
            pr.read_prior(tmp_path / "p.csv")
