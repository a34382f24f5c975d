"""Comparison methods: BO without a prior, domain randomization, and latent estimation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from simprior import rng as _rng
from simprior.bo import SearchConfig, SearchHistory, search
from simprior.errors import InvalidInputError
from simprior.physics import (DEFAULT_HORIZON, Action, EnvironmentSetting, LatentBounds, Role, Task, TaskSet,
                              rollout)
from simprior.policy import InteractionCounter, PolicyTable, RankedPolicy, condition, policy_from_scores


def no_prior_search(table: PolicyTable, tasks: TaskSet, real: EnvironmentSetting, cfg: SearchConfig,
                    counter: InteractionCounter | None = None) -> SearchHistory:
    return search(table, [], tasks, real, cfg, counter)


def domain_randomized_scores(table: PolicyTable, M: int, gen: np.random.Generator) -> np.ndarray:
    if M < 1:
        raise InvalidInputError("M must be >= 1")
    draws = gen.uniform(table.bounds.lower, table.bounds.upper, size=(int(M), table.bounds.dim))
    total = np.zeros(table.scores.shape[1:])
    for theta in draws:
        total += table.interpolate(theta)
    return total / M


def domain_randomized_policy(table: PolicyTable, M: int = 16, gen: np.random.Generator | None = None) -> RankedPolicy:
    """One latent-independent policy ranking actions by their score averaged over ``M`` uniform latents."""
    gen = gen if gen is not None else _rng.generator(0, "dr")
    return policy_from_scores(table, domain_randomized_scores(table, M, gen))


@dataclass(frozen=True)
class Probe:
    task: Task
    action: Action
    positions: np.ndarray  # (steps + 1, 2) recorded in the real setting


def record_probes(table: PolicyTable, tasks: TaskSet, real: EnvironmentSetting, n_tasks: int = 5,
                  n_actions: int = 5, counter: InteractionCounter | None = None,
                  horizon: int = DEFAULT_HORIZON) -> list[Probe]:
    """Roll out the top actions of the mid-box policy on the first tasks and keep the paths.

    Each probe is one real-world interaction and is tallied on ``counter``.
    """
    if real.role is not Role.REAL:
        raise InvalidInputError("probes are recorded in the real setting")
    policy = condition(table, table.bounds.midpoint)
    acts = table.actions.actions
    probes = []
    for task in list(tasks)[:n_tasks]:
        for a in policy.ranked(task.id, n_actions):
            traj = rollout(task, acts[int(a)], real, horizon)
            probes.append(Probe(task, acts[int(a)], traj.positions.copy()))
    if counter is not None:
        counter.add(Role.REAL, len(probes))
    return probes


def trajectory_residual(theta, probes: Sequence[Probe], horizon: int = DEFAULT_HORIZON) -> float:
    """Mean squared per-step position gap between recorded paths and undamped simulation at ``theta``."""
    if not probes:
        raise InvalidInputError("need at least one probe")
    sim = EnvironmentSetting.simulated(theta)
    total = 0.0
    for p in probes:
        q = rollout(p.task, p.action, sim, horizon).positions
        n = min(len(q), len(p.positions))
        diff = q[:n] - p.positions[:n]
        total += float(np.mean(np.sum(diff * diff, axis=1)))
    return total / len(probes)


@dataclass(frozen=True)
class CemConfig:
    population: int = 50
    elites: int = 10
    iterations: int = 10
    init_mean: tuple[float, ...] | None = None
    init_std: tuple[float, ...] | None = None
    std_floor: float = 1e-3

    def __post_init__(self):
        if not 1 <= self.elites < self.population:
            raise InvalidInputError("need 1 <= elites < population")
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if self.init_std is not None and any(not s > 0.0 for s in self.init_std):
            raise InvalidInputError("initial stds must be positive")


@dataclass
class CemResult:
    theta: np.ndarray
    elite_means: list[float]  # mean elite residual per iteration


def cem_minimize(residual: Callable[[np.ndarray], float], bounds: LatentBounds, cfg: CemConfig,
                 gen: np.random.Generator) -> CemResult:
    mean = np.asarray(cfg.init_mean if cfg.init_mean is not None else bounds.midpoint, dtype=float)
    std = np.asarray(cfg.init_std if cfg.init_std is not None else bounds.width / 4.0, dtype=float)
    trace = []
    elite = np.zeros((0, bounds.dim))
    elite_scores = np.zeros(0)
    for _ in range(cfg.iterations):
        pop = bounds.clip(mean + std * gen.standard_normal((cfg.population, bounds.dim)))
        scores = np.array([residual(x) for x in pop])
        # previous elites compete again, so the elite residual never rises
        pool = np.vstack([elite, pop])
        pool_scores = np.r_[elite_scores, scores]
        keep = np.argsort(pool_scores, kind="stable")[:cfg.elites]
        elite, elite_scores = pool[keep], pool_scores[keep]
        trace.append(float(elite_scores.mean()))
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0), cfg.std_floor)
    return CemResult(bounds.clip(mean), trace)


def estimate_latents_cem(probes: Sequence[Probe], cfg: CemConfig, bounds: LatentBounds,
                         gen: np.random.Generator, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """Latent that best reproduces the recorded probe paths, by the cross-entropy method."""
    return cem_minimize(lambda x: trajectory_residual(x, probes, horizon), bounds, cfg, gen).theta
