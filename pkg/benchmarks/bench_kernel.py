"""Time the compiled rollout kernel against the pure-Python fallback.

Both backends score the same task/action/latent batch; the outputs must be
identical, and the script reports wall time per backend and the speedup.

    python3 benchmarks/bench_kernel.py --tasks 4 --actions 15
"""
import argparse
import importlib
import time

import numpy as np

from simprior import _kernel_py
from simprior.physics import LatentBounds, generate_tasks
from simprior.policy import ActionSet, lattice_nodes


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--tasks", type=int, default=4, help="tasks in the batch")
    p.add_argument("--actions", type=int, default=15, help="angles and speeds per axis")
    p.add_argument("--lattice", type=int, default=2, help="latent lattice points per axis")
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    tasks = generate_tasks(n_tasks=args.tasks, folds=(args.tasks, 0, 0)).rows()
    vels = ActionSet(args.actions, args.actions).velocities()
    latents = lattice_nodes(LatentBounds(), args.lattice)
    n = len(tasks) * len(vels) * len(latents)
    print(f"batch: {len(latents)} latents x {len(tasks)} tasks x {len(vels)} actions = {n} rollouts")

    def run(mod):
        return lambda: mod.score_table(tasks, vels, latents, args.damping, 2400)

    t_py, ref = _time(run(_kernel_py), args.repeat)
    print(f"python : {t_py:8.4f} s  ({1e6 * t_py / n:8.1f} us/rollout)")
    try:
        compiled = importlib.import_module("simprior._kernel")
    except ImportError:
        print("compiled: not built (pip install -e . --no-build-isolation)")
        return 1
    t_c, out = _time(run(compiled), args.repeat)
    print(f"cython : {t_c:8.4f} s  ({1e6 * t_c / n:8.1f} us/rollout)")
    same = np.array_equal(ref, out)
    print(f"speedup: {t_py / t_c:6.1f}x   identical output: {same}")
    return 0 if same else 2


if __name__ == "__main__":
    raise SystemExit(main())
