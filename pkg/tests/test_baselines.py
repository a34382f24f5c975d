import math

import numpy as np
import pytest

from simprior import baselines as bl
from simprior.bo import SearchConfig, search
from simprior.errors import InvalidInputError
from simprior.physics import Action, EnvironmentSetting, LatentBounds, Task, rollout
from simprior.policy import InteractionCounter, PolicyTable, condition, rank_scores

TRUE = (1.2, 0.6)


def _probes(latent=TRUE, n=4):
    env = EnvironmentSetting.simulated(latent)
    tasks = [Task(0, 2.0, 2.3), Task(1, 3.1, 3.4)]
    acts = [Action(math.radians(a), s) for a, s in [(30, 5.0), (45, 6.0), (60, 7.0), (40, 4.0)][:n]]
    return [bl.Probe(t, a, rollout(t, a, env).positions) for t in tasks for a in acts]


class TestNoPrior:
    def test_counts_and_matches_empty_prior_search(self, small_table, small_tasks):
        real = EnvironmentSetting.real((1.0, 0.3), 0.8)
        cfg = SearchConfig(T=2, seed=100, top_k=3)
        h = bl.no_prior_search(small_table, small_tasks.fold("val"), real, cfg)
        assert len(h) == cfg.cold_start + cfg.T
        again = search(small_table, [], small_tasks.fold("val"), real, cfg)
        assert h.entries == again.entries


class TestDomainRandomization:
    def test_single_draw_equals_conditioning(self, small_table):
        gen = np.random.default_rng(3)
        theta = np.random.default_rng(3).uniform(small_table.bounds.lower, small_table.bounds.upper, size=(1, 2))[0]
        pol = bl.domain_randomized_policy(small_table, 1, gen)
        ref = condition(small_table, theta)
        for tid in small_table.task_ids:
            np.testing.assert_array_equal(pol.ranked(tid), ref.ranked(tid))

    def test_average_within_draw_range(self, small_table):
        gen = np.random.default_rng(8)
        draws = np.random.default_rng(8).uniform(small_table.bounds.lower, small_table.bounds.upper, size=(16, 2))
        per = np.array([small_table.interpolate(t) for t in draws])
        avg = bl.domain_randomized_scores(small_table, 16, gen)
        assert np.all(avg >= per.min(axis=0) - 1e-12) and np.all(avg <= per.max(axis=0) + 1e-12)

    def test_converges_to_box_integral(self, small_table):
        avg = bl.domain_randomized_scores(small_table, 10_000, np.random.default_rng(0))
        # midpoint quadrature of the interpolant on a dense grid
        n = 120
        b = small_table.bounds
        ua = (np.arange(n) + 0.5) / n
        grid = [b.denormalize((u, v)) for u in ua for v in ua]
        quad = np.mean([small_table.interpolate(g) for g in grid], axis=0)
        np.testing.assert_allclose(avg, quad, atol=1e-2)

    def test_ranking_invariant_to_scaling(self, small_table):
        half = PolicyTable(small_table.bounds, small_table.lattice_res, small_table.task_ids, small_table.actions,
                           small_table.scores * 0.5)
        a = bl.domain_randomized_policy(small_table, 16, np.random.default_rng(2))
        b = bl.domain_randomized_policy(half, 16, np.random.default_rng(2))
        for tid in small_table.task_ids:
            np.testing.assert_array_equal(a.ranked(tid), b.ranked(tid))

    def test_m_validated(self, small_table):
        with pytest.raises(InvalidInputError):
            bl.domain_randomized_policy(small_table, 0)


class TestResidual:
    def test_zero_at_truth_without_damping(self):
        assert bl.trajectory_residual(TRUE, _probes()) < 1e-10

    def test_truth_beats_friction_perturbation(self):
        probes = _probes()
        assert bl.trajectory_residual(TRUE, probes) <= bl.trajectory_residual((TRUE[0] + 1.0, TRUE[1]), probes)

    def test_nonnegative(self):
        probes = _probes()
        for theta in [(0.0, 0.0), (3.0, 1.0), (0.5, 0.9)]:
            assert bl.trajectory_residual(theta, probes) >= 0.0

    def test_empty_probes(self):
        with pytest.raises(InvalidInputError):
            bl.trajectory_residual(TRUE, [])

    def test_record_probes_counts_real_interactions(self, small_table, small_tasks):
        counter = InteractionCounter()
        real = EnvironmentSetting.real(TRUE, 0.8)
        probes = bl.record_probes(small_table, small_tasks.fold("train"), real, 5, 3, counter)
        assert len(probes) == 2 * 3  # the train fold holds two tasks
        assert counter.real == len(probes)
        assert counter.simulated == 0

    def test_record_probes_needs_real(self, small_table, small_tasks):
        with pytest.raises(InvalidInputError):
            bl.record_probes(small_table, small_tasks, EnvironmentSetting.simulated(TRUE))


class TestCem:
    STAR = np.array([1.5, 0.5])

    def _stub(self, x):
        return float(np.sum((np.asarray(x) - self.STAR) ** 2))

    def test_recovers_stub_optimum(self):
        res = bl.cem_minimize(self._stub, LatentBounds(), bl.CemConfig(), np.random.default_rng(50))
        np.testing.assert_allclose(res.theta, self.STAR, atol=0.05)

    def test_elite_residual_non_increasing(self):
        res = bl.cem_minimize(self._stub, LatentBounds(), bl.CemConfig(), np.random.default_rng(100))
        assert all(b <= a + 1e-12 for a, b in zip(res.elite_means, res.elite_means[1:]))

    def test_stays_in_bounds(self):
        # optimum outside the box pulls the mean onto the boundary
        far = lambda x: float(np.sum((np.asarray(x) - np.array([10.0, -5.0])) ** 2))
        res = bl.cem_minimize(far, LatentBounds(), bl.CemConfig(), np.random.default_rng(1))
        assert LatentBounds().contains(res.theta)

    def test_deterministic(self):
        a = bl.cem_minimize(self._stub, LatentBounds(), bl.CemConfig(), np.random.default_rng(7)).theta
        b = bl.cem_minimize(self._stub, LatentBounds(), bl.CemConfig(), np.random.default_rng(7)).theta
        np.testing.assert_array_equal(a, b)

    def test_identifiable_without_damping(self):
        probes = _probes(n=2)
        theta = bl.estimate_latents_cem(probes, bl.CemConfig(), LatentBounds(), np.random.default_rng(50))
        assert bl.trajectory_residual(theta, probes) < 1e-4

    @pytest.mark.parametrize("kw", [dict(elites=50), dict(elites=0), dict(iterations=0), dict(init_std=(0.0, 1.0))])
    def test_config_validated(self, kw):
        with pytest.raises(InvalidInputError):
            bl.CemConfig(**kw)
