"""The compiled kernel must reproduce the pure-Python reference bit for bit."""
import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simprior import _kernel_py
from simprior.physics import LatentBounds, generate_tasks
from simprior.policy import ActionSet, lattice_nodes

compiled = pytest.importorskip("simprior._kernel", reason="compiled kernel not built")


@pytest.fixture(scope="module")
def batch():
    tasks = np.vstack([generate_tasks(n_tasks=2, folds=(2, 0, 0)).rows(),
                       generate_tasks(n_tasks=2, folds=(2, 0, 0), variant="bank_shot").rows()])
    return tasks, ActionSet(6, 6).velocities(), lattice_nodes(LatentBounds(), 2)


class TestEquivalence:
    @pytest.mark.parametrize("damping", [0.0, 0.8])
    def test_score_table_identical(self, batch, damping):
        tasks, vels, latents = batch
        a = _kernel_py.score_table(tasks, vels, latents, damping, 2400)
        b = compiled.score_table(tasks, vels, latents, damping, 2400)
        assert a.dtype == b.dtype == np.uint8
        np.testing.assert_array_equal(a, b)

    def test_recorded_states_bitwise_equal(self, batch):
        tasks, vels, _ = batch
        for row in tasks:
            for vx, vy in vels[::5]:
                ra, sa, xa = _kernel_py.rollout_record(vx, vy, 0.7, 0.6, 0.3, row, 1500)
                rb, sb, xb = compiled.rollout_record(vx, vy, 0.7, 0.6, 0.3, row, 1500)
                assert (ra, sa) == (rb, sb)
                assert xa.tobytes() == xb.tobytes()

    def test_first_success_identical(self, batch):
        tasks, vels, _ = batch
        order = np.arange(len(vels), dtype=np.int64)[::-1].copy()
        for row in tasks:
            assert _kernel_py.first_success(vels, order, 1.0, 0.3, 0.0, row, 2400) == \
                compiled.first_success(vels, order, 1.0, 0.3, 0.0, row, 2400)

    @settings(max_examples=60, deadline=None)
    @given(vx=st.floats(-5, 15), vy=st.floats(-15, 15), mu=st.floats(0, 3), e=st.floats(0, 1),
           nx=st.floats(-1, 1), ny=st.floats(-1, 1))
    def test_resolve_identical(self, vx, vy, mu, e, nx, ny):
        assert _kernel_py.resolve(vx, vy, nx, ny, mu, e) == compiled.resolve(vx, vy, nx, ny, mu, e)

    @settings(max_examples=60, deadline=None)
    @given(x=st.floats(0, 5), y=st.floats(0.05, 3), vx=st.floats(-10, 10), vy=st.floats(-10, 10),
           c=st.sampled_from([0.0, 0.8]))
    def test_step_identical(self, x, y, vx, vy, c):
        args = (x, y, vx, vy, 0.4, 0.7, c, 2.0, 2.3, 0.0, 0.2, 1.0 / 240.0)
        assert _kernel_py.step(*args) == tuple(compiled.step(*args))

    def test_constants_shared(self):
        assert compiled.constants() == _kernel_py.constants()


class TestSelection:
    def test_default_is_compiled(self):
        from simprior import _backend
        if os.environ.get("SIMPRIOR_PURE") == "1":
            pytest.skip("fallback forced by environment")
        assert _backend.BACKEND == "cython"

    def test_env_var_forces_fallback(self):
        code = "from simprior._backend import BACKEND; print(BACKEND)"
        env = dict(os.environ, SIMPRIOR_PURE="1")
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out.stdout.strip() == "python"
