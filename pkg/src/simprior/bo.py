"""Expected-improvement Bayesian optimization over the latent box.

The GP lives in normalized coordinates (the latent box mapped onto the unit
cube). Prior observations, when present, replace the random cold start.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from simprior import gp
from simprior import rng as _rng
from simprior.errors import IllConditionedError, InvalidInputError
from simprior.physics import DEFAULT_HORIZON, EnvironmentSetting, LatentBounds, Role, TaskSet
from simprior.policy import InteractionCounter, PolicyTable, condition, evaluate
from simprior.prior import PriorObservation, prior_arrays

SCREEN_SIZE = 1024
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
REFINE_TOL = 1e-4
MAX_SWEEPS = 20
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def expected_improvement(mean, variance, best: float, xi: float = 0.0):
    """EI for maximization; vectorized over ``mean`` / ``variance``."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0.0):
        raise InvalidInputError("variance must be >= 0")
    sigma = np.sqrt(variance)
    gain = mean - best - xi
    flat = sigma < 1e-12
    safe = np.where(flat, 1.0, sigma)
    z = gain / safe
    ei = gain * ndtr(z) + safe * INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(flat, np.maximum(gain, 0.0), np.maximum(ei, 0.0))
    return float(ei) if ei.ndim == 0 else ei


def incumbent(model: gp.GpModel) -> float:
    """Best real observation, or the best prior mean before any real data."""
    obs = model.obs
    if obs.n_real:
        return float(np.max(obs.real_y))
    return float(np.max(obs.prior_y))


def _ei_unit(model, best, xi):
    def f(u):
        m, v = gp.predict(model, np.atleast_2d(u))
        return expected_improvement(m, v, best, xi)
    return f


def _golden_line(f, U, k, lo, hi):
    """Vectorized golden-section maximization of ``f`` along coordinate ``k`` for every row of ``U``."""
    a, b = lo.copy(), hi.copy()
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)

    def at(col):
        V = U.copy()
        V[:, k] = col
        return f(V)

    fc, fd = at(c), at(d)
    while np.max(b - a) > REFINE_TOL:
        left = fc >= fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        p = np.where(left, b - GOLDEN * (b - a), a + GOLDEN * (b - a))
        fp = at(p)
        c, d = np.where(left, p, d), np.where(left, c, p)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
    x = 0.5 * (a + b)
    return x, at(x)


def maximize_unit(f: Callable, dim: int, restarts: int, gen: np.random.Generator,
                  screen_size: int = SCREEN_SIZE):
    """Maximize ``f`` over the unit cube; returns (u, value, screen_values).

    A scrambled Sobol screen picks the ``restarts`` best starts; each is
    refined by coordinate-wise golden-section sweeps that only accept
    improvements, so the result is never worse than the best screen point.
    """
    if restarts < 1:
        raise InvalidInputError("restarts must be >= 1")
    sobol = qmc.Sobol(dim, scramble=True, seed=int(gen.integers(2 ** 32)))
    screen = sobol.random(screen_size)
    vals = np.asarray(f(screen), dtype=float)
    top = np.argsort(-vals, kind="stable")[:restarts]
    U = screen[top].copy()
    fu = vals[top].copy()
    for _ in range(MAX_SWEEPS):
        moved = 0.0
        for k in range(dim):
            x, fx = _golden_line(f, U, k, np.zeros(len(U)), np.ones(len(U)))
            better = fx > fu
            if np.any(better):
                moved = max(moved, float(np.max(np.abs(x[better] - U[better, k]))))
                U[better, k] = x[better]
                fu[better] = fx[better]
        if moved < REFINE_TOL:
            break
    i = int(np.argmax(fu))
    return U[i], float(fu[i]), vals


def propose(model: gp.GpModel, bounds: LatentBounds, restarts: int, gen: np.random.Generator,
            xi: float = 0.0, best: float | None = None) -> np.ndarray:
    """Latent (in ``bounds``) maximizing EI under a model fitted in unit coordinates."""
    if best is None:
        best = incumbent(model)
    u, _, _ = maximize_unit(_ei_unit(model, best, xi), bounds.dim, restarts, gen)
    return bounds.clip(bounds.denormalize(np.clip(u, 0.0, 1.0)))


@dataclass(frozen=True)
class SearchConfig:
    T: int = 20
    cold_start: int = 3
    xi: float = 0.0
    restarts: int = 10
    seed: int = 0
    top_k: int = 5
    optimize_hyper: bool = True
    lengthscale: float = 0.2
    signal_variance: float = 1.0
    real_noise_var: float = gp.DEFAULT_REAL_NOISE
    sim2real: float = gp.DEFAULT_SIM2REAL
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        if self.T < 1:
            raise InvalidInputError("T must be >= 1")
        if self.cold_start < 0 or self.restarts < 1 or self.top_k < 1:
            raise InvalidInputError("cold_start >= 0, restarts >= 1 and top_k >= 1 required")
        if self.xi < 0.0:
            raise InvalidInputError("xi must be >= 0")


@dataclass
class SearchEntry:
    iteration: int
    x: tuple[float, ...]
    objective: float
    best_so_far: float
    interactions: int  # cumulative real-world attempts


@dataclass
class SearchHistory:
    seed: int
    entries: list[SearchEntry] = field(default_factory=list)

    def append(self, iteration: int, x, objective: float, interactions: int) -> None:
        prev = self.entries[-1].best_so_far if self.entries else -math.inf
        total = (self.entries[-1].interactions if self.entries else 0) + int(interactions)
        self.entries.append(SearchEntry(iteration, tuple(float(v) for v in x), float(objective),
                                        max(prev, float(objective)), total))

    def __len__(self):
        return len(self.entries)

    @property
    def best(self) -> SearchEntry:
        if not self.entries:
            raise InvalidInputError("empty history")
        # earliest entry among ties
        return self.entries[int(np.argmax([e.objective for e in self.entries]))]

    @property
    def best_x(self) -> tuple[float, ...]:
        return self.best.x

    @property
    def best_y(self) -> float:
        return self.best.objective

    @property
    def interactions(self) -> int:
        return self.entries[-1].interactions if self.entries else 0

    def best_curve(self) -> np.ndarray:
        return np.array([e.best_so_far for e in self.entries])


def evaluations_to_fraction(curve, fraction: float = 0.95) -> int:
    """1-based evaluation count at which the best-so-far curve reaches ``fraction`` of its final value."""
    curve = np.asarray(curve, dtype=float)
    if curve.size == 0:
        raise InvalidInputError("empty curve")
    target = fraction * curve[-1]
    return int(np.argmax(curve >= target)) + 1


def search_fn(objective: Callable[[np.ndarray], tuple[float, int]], bounds: LatentBounds,
              prior: Sequence[PriorObservation], cfg: SearchConfig, initial=None) -> SearchHistory:
    """BO loop against an arbitrary objective returning (value, real interactions).

    Without a prior, ``cfg.cold_start`` uniform points are evaluated first
    (numbered ``1 - cold_start .. 0``); ``initial`` replaces those points
    and is evaluated whether or not a prior is given.
    """
    d = bounds.dim
    px, py, pv = prior_arrays(list(prior), d)
    obs = gp.ObservationSet(bounds.normalize(px) if len(px) else px, py, pv, np.zeros((0, d)), np.zeros(0),
                            real_noise_var=cfg.real_noise_var, sim2real=cfg.sim2real)
    hist = SearchHistory(cfg.seed)
    if initial is not None:
        starts = np.atleast_2d(np.asarray(initial, dtype=float))
    elif obs.n_prior == 0:
        starts = bounds.denormalize(_rng.generator(cfg.seed, "cold-start").uniform(size=(cfg.cold_start, d)))
    else:
        starts = np.zeros((0, d))
    for j, x in enumerate(starts):
        x = bounds.check(x)
        y, n = objective(x)
        hist.append(j + 1 - len(starts), x, y, n)
        obs = obs.add_real(bounds.normalize(x), y)
    if len(obs) == 0:
        raise InvalidInputError("search needs a prior or at least one cold-start point")

    hyper = gp.KernelHyper((cfg.lengthscale,) * d, cfg.signal_variance)
    first = True
    for i in range(1, cfg.T + 1):
        if cfg.optimize_hyper and len(obs) >= 2:
            hyper = gp.optimize_hyper(obs, seed=_rng.child_seed(cfg.seed, "hyper", i),
                                      restarts=3 if first else 1, init=hyper)
            first = False
        try:
            model = gp.fit(obs, hyper)
        except IllConditionedError as exc:
            raise IllConditionedError(f"trial seed {cfg.seed}, iteration {i}: {exc}") from exc
        x = propose(model, bounds, cfg.restarts, _rng.generator(cfg.seed, "propose", i), cfg.xi)
        y, n = objective(x)
        hist.append(i, x, y, n)
        obs = obs.add_real(bounds.normalize(x), y)
    return hist


def search(table: PolicyTable, prior: Sequence[PriorObservation], tasks: TaskSet, real: EnvironmentSetting,
           cfg: SearchConfig, counter: InteractionCounter | None = None, initial=None) -> SearchHistory:
    """Find the latent whose conditioned policy does best on ``tasks`` in the real setting."""
    if real.role is not Role.REAL:
        raise InvalidInputError("search must run against a real setting")

    def objective(x):
        res = evaluate(condition(table, x), tasks, real, cfg.top_k, cfg.horizon, counter)
        return res.objective, res.interactions

    return search_fn(objective, table.bounds, prior, cfg, initial)


def history_fields(dim: int) -> list[str]:
    return ["trial_seed", "iter"] + [f"theta_{i + 1}" for i in range(dim)] + ["objective", "best_so_far",
                                                                              "interactions"]


def write_history(path, histories: Sequence[SearchHistory], dim: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(history_fields(dim))
        for h in histories:
            for e in h.entries:
                theta = [repr(float(v)) for v in e.x] if e.x else [""] * dim
                w.writerow([h.seed, e.iteration, *theta, repr(e.objective), repr(e.best_so_far), e.interactions])


def read_history(path) -> list[SearchHistory]:
    out: dict[int, SearchHistory] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["trial_seed", "iter"]:
            raise InvalidInputError(f"{path}: not a history file")
        d = len(header) - 5
        for row in reader:
            seed = int(row[0])
            h = out.setdefault(seed, SearchHistory(seed))
            theta = tuple(float(v) for v in row[2:2 + d]) if row[2] else ()
            h.entries.append(SearchEntry(int(row[1]), theta, float(row[2 + d]), float(row[3 + d]), int(row[4 + d])))
    return list(out.values())
