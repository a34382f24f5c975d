import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simprior import policy as po
from simprior.errors import ArtifactFormatError, InvalidInputError
from simprior.physics import EnvironmentSetting, LatentBounds, Role, TaskSet, generate_tasks


def _table(scores, res=3, bounds=LatentBounds(), n_actions=(2, 2)):
    g, t, a = scores.shape
    return po.PolicyTable(bounds, res, tuple(range(t)), po.ActionSet(*n_actions), scores)


class TestActionSet:
    def test_size_and_order(self):
        acts = po.ActionSet(3, 4)
        assert len(acts) == 12
        # angle-major: the first four share one angle
        assert len({a.angle for a in acts.actions[:4]}) == 1
        assert acts.velocities().shape == (12, 2)

    def test_spec_roundtrip(self):
        acts = po.ActionSet(5, 7)
        assert po.ActionSet.from_spec(acts.spec()) == acts

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            po.ActionSet(0, 3)


class TestInterpolation:
    def test_nodes_reproduce_their_scores(self, gen):
        scores = gen.uniform(size=(9, 2, 4))
        table = _table(scores)
        for i, node in enumerate(table.nodes):
            np.testing.assert_array_equal(table.interpolate(node), scores[i])

    def test_bilinear_oracle(self, gen):
        # independent bilinear evaluation on a 2x2 lattice
        scores = gen.uniform(size=(4, 1, 4))
        table = _table(scores, res=2)
        theta = np.array([0.9, 0.3])
        u, v = theta[0] / 3.0, theta[1] / 1.0
        # row-major: node index = i * 2 + j with i over friction
        expected = ((1 - u) * (1 - v) * scores[0] + (1 - u) * v * scores[1]
                    + u * (1 - v) * scores[2] + u * v * scores[3])
        np.testing.assert_allclose(table.interpolate(theta), expected, atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(0, 3), b=st.floats(0, 1))
    def test_interpolant_within_node_range(self, a, b):
        rng = np.random.default_rng(0)
        scores = rng.uniform(size=(9, 2, 4))
        out = _table(scores).interpolate((a, b))
        assert np.all(out >= scores.min(axis=0) - 1e-12)
        assert np.all(out <= scores.max(axis=0) + 1e-12)

    def test_out_of_bounds_rejected(self, gen):
        with pytest.raises(InvalidInputError):
            _table(gen.uniform(size=(9, 1, 4))).interpolate((3.5, 0.5))

    def test_shape_validated(self):
        with pytest.raises(InvalidInputError):
            _table(np.zeros((8, 1, 4)))

    def test_range_validated(self):
        with pytest.raises(InvalidInputError):
            _table(np.full((9, 1, 4), 1.5))

    def test_scores_read_only(self, gen):
        table = _table(gen.uniform(size=(9, 1, 4)))
        with pytest.raises(ValueError):
            table.scores[0, 0, 0] = 0.0


class TestRanking:
    def test_ties_break_by_index(self):
        np.testing.assert_array_equal(po.rank_scores([0.5, 1.0, 0.5, 1.0]), [1, 3, 0, 2])

    def test_ranked_prefix(self, gen):
        table = _table(gen.uniform(size=(9, 2, 4)))
        pol = po.condition(table, (1.0, 0.5))
        assert len(pol.ranked(0, 2)) == 2
        assert pol.latent == (1.0, 0.5)
        with pytest.raises(InvalidInputError):
            pol.ranked(99)

    def test_unknown_task(self, gen):
        with pytest.raises(InvalidInputError):
            _table(gen.uniform(size=(9, 1, 4))).task_index(5)


class TestTrain:
    def test_dims_and_determinism(self, small_tasks, small_actions, small_table):
        assert small_table.scores.shape == (9, 6, 100)
        again = po.train(small_tasks, LatentBounds(), small_actions, lattice_res=3)
        np.testing.assert_array_equal(again.scores, small_table.scores)

    def test_binary_scores(self, small_table):
        assert set(np.unique(small_table.scores)) <= {0.0, 1.0}

    def test_lattice_res_validated(self, small_tasks, small_actions):
        with pytest.raises(InvalidInputError):
            po.train(small_tasks, LatentBounds(), small_actions, lattice_res=1)


class TestEvaluate:
    def test_counts_attempts_by_role(self, small_table, small_tasks):
        counter = po.InteractionCounter()
        pol = po.condition(small_table, (1.0, 0.3))
        real = EnvironmentSetting.real((1.0, 0.3), 0.8)
        res = po.evaluate(pol, small_tasks.fold("val"), real, 5, counter=counter)
        assert counter.real == res.interactions
        assert counter.simulated == 0
        assert 2 <= res.interactions <= 10

    def test_objective_is_fraction_solved(self, small_table, small_tasks):
        pol = po.condition(small_table, small_table.nodes[4])
        env = EnvironmentSetting.simulated(small_table.nodes[4])
        res = po.evaluate(pol, small_tasks, env, 100)
        solved = [f is not None for f in res.first_success]
        assert res.objective == pytest.approx(np.mean(solved))
        # a node's own ranking puts a sim-successful action first when there is one
        for i, tid in enumerate(small_table.task_ids):
            if small_table.scores[4, i].max() == 1.0:
                assert res.first_success[i] == 1

    def test_top_k_validated(self, small_table, small_tasks):
        with pytest.raises(InvalidInputError):
            po.evaluate(po.condition(small_table, (1, 0.5)), small_tasks, EnvironmentSetting.simulated((1, 0.5)), 0)

    def test_empty_taskset(self, small_table):
        with pytest.raises(InvalidInputError):
            po.evaluate(po.condition(small_table, (1, 0.5)), TaskSet(()), EnvironmentSetting.simulated((1, 0.5)), 5)


class TestAuccess:
    def test_weights_telescope(self):
        assert po.auccess_weights(100).sum() == pytest.approx(math.log(101), abs=1e-12)

    def test_all_solved_first(self):
        assert po.auccess([1] * 7) == pytest.approx(1.0, abs=1e-15)

    def test_solved_only_at_last(self):
        assert po.auccess([100, 100]) == pytest.approx(math.log(1.01) / math.log(101), abs=1e-9)

    def test_none_solved(self):
        assert po.auccess([None, None]) == 0.0

    def test_mixed_by_hand(self):
        # one task at attempt 1, one at attempt 2, K = 2
        w1, w2 = math.log(2), math.log(1.5)
        expected = (w1 * 0.5 + w2 * 1.0) / (w1 + w2)
        assert po.auccess([1, 2], K=2) == pytest.approx(expected, abs=1e-15)

    def test_index_validated(self):
        with pytest.raises(InvalidInputError):
            po.auccess([101])
        with pytest.raises(InvalidInputError):
            po.auccess([])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.one_of(st.none(), st.integers(1, 100)), min_size=1, max_size=20))
    def test_bounded_and_monotone(self, first):
        a = po.auccess(first)
        assert 0.0 <= a <= 1.0
        earlier = [None if f is None else max(1, f - 1) for f in first]
        assert po.auccess(earlier) >= a - 1e-15


class TestArtifact:
    def test_roundtrip_bytes(self, tmp_path, small_table, small_tasks, small_actions):
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        po.save_table(p1, small_table)
        loaded = po.load_table(p1, expect_tasks=small_tasks, expect_actions=small_actions)
        po.save_table(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()
        np.testing.assert_array_equal(loaded.scores, small_table.scores)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"nope\n{}\n")
        with pytest.raises(ArtifactFormatError):
            po.load_table(tmp_path / "x.bin")

    def test_truncated_payload(self, tmp_path, small_table):
        p = tmp_path / "a.bin"
        po.save_table(p, small_table)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ArtifactFormatError):
            po.load_table(p)

    def test_task_mismatch(self, tmp_path, small_table):
        p = tmp_path / "a.bin"
        po.save_table(p, small_table)
        with pytest.raises(ArtifactFormatError):
            po.load_table(p, expect_tasks=generate_tasks(n_tasks=3, folds=(1, 1, 1)))

    def test_action_mismatch(self, tmp_path, small_table):
        p = tmp_path / "a.bin"
        po.save_table(p, small_table)
        with pytest.raises(ArtifactFormatError):
            po.load_table(p, expect_actions=po.ActionSet(3, 3))
