"""Policy prior: how a latent-conditioned policy performs across simulated worlds.

For each sampled latent the policy table is conditioned there and evaluated
in a shared set of uniformly drawn simulated settings. The spread of those
scores becomes the per-sample variance; a one-sample KS test against the
fitted normal flags samples whose scores are clearly not Gaussian.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from simprior import rng as _rng
from simprior.errors import DegenerateDistributionError, InvalidInputError
from simprior.physics import DEFAULT_HORIZON, EnvironmentSetting, LatentBounds, TaskSet
from simprior.policy import InteractionCounter, PolicyTable, condition, evaluate

KS_TERM_TOL = 1e-10


def sample_latents(N: int, bounds: LatentBounds, seed: int, tag: str = "prior-latents") -> np.ndarray:
    """``N`` points uniform in ``bounds`` as an (N, d) array."""
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    gen = _rng.generator(seed, tag)
    return gen.uniform(bounds.lower, bounds.upper, size=(int(N), bounds.dim))


def sample_settings(E: int, bounds: LatentBounds, seed: int) -> list[EnvironmentSetting]:
    """``E`` simulated (undamped) settings with latents uniform in ``bounds``."""
    return [EnvironmentSetting.simulated(row) for row in sample_latents(E, bounds, seed, "prior-settings")]


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, ``2 sum (-1)^(j-1) exp(-2 j^2 lam^2)``."""
    if lam <= 0.0:
        return 1.0
    total, j = 0.0, 1
    while True:
        term = math.exp(-2.0 * j * j * lam * lam)
        total += term if j % 2 else -term
        if term < KS_TERM_TOL:
            break
        j += 1
    return min(max(2.0 * total, 0.0), 1.0)


def ks_pvalue(D: float, n: int) -> float:
    """Asymptotic p-value of a KS statistic ``D`` from ``n`` samples, small-sample corrected."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rn = math.sqrt(n)
    return kolmogorov_sf((rn + 0.12 + 0.11 / rn) * D)


def ks_test(samples, mu: float, var: float) -> tuple[float, float]:
    """One-sample KS statistic and p-value against Normal(mu, var).

    The p-value uses the asymptotic Kolmogorov distribution at
    ``(sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D``. For small ``lam`` the series
    converges slowly but still terminates; the result is clamped to [0, 1].
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n < 3:
        raise InvalidInputError("ks_test needs at least 3 samples")
    if not np.all(np.isfinite(x)) or not math.isfinite(mu) or not math.isfinite(var):
        raise InvalidInputError("ks_test inputs must be finite")
    if var < 0.0:
        raise InvalidInputError("variance must be >= 0")
    if var == 0.0:
        raise DegenerateDistributionError("cannot test against a zero-variance normal")
    cdf = ndtr((x - mu) / math.sqrt(var))
    i = np.arange(1, n + 1)
    d_plus = float(np.max(i / n - cdf))
    d_minus = float(np.max(cdf - (i - 1) / n))
    D = max(d_plus, d_minus)
    return D, ks_pvalue(D, n)


@dataclass(frozen=True)
class PriorObservation:
    x: tuple[float, ...]
    mean: float
    var: float
    p_value: float
    kept: bool


@dataclass(frozen=True)
class PriorConfig:
    N: int = 100
    E: int = 10
    gamma: float = 0.1
    bounds: LatentBounds = LatentBounds()
    eval_top_k: int = 5
    horizon: int = DEFAULT_HORIZON

    def __post_init__(self):
        if self.N < 1:
            raise InvalidInputError("N must be >= 1")
        if self.E < 3:
            raise InvalidInputError("E must be >= 3")
        # 0 is admitted so the filter can be switched off
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidInputError("gamma must lie in [0, 1)")
        if self.eval_top_k < 1:
            raise InvalidInputError("eval_top_k must be >= 1")


def build_prior(table: PolicyTable, tasks: TaskSet, cfg: PriorConfig, seed: int,
                counter: InteractionCounter | None = None,
                settings: Sequence[EnvironmentSetting] | None = None) -> list[PriorObservation]:
    """Evaluate the conditioned table at ``N`` latents in ``E`` simulated settings.

    Every record is returned; ``kept`` marks those with positive variance and
    a KS p-value of at least ``gamma``. ``settings`` overrides the sampled
    environment settings (all must be simulated).
    """
    xs = sample_latents(cfg.N, cfg.bounds, seed)
    envs = list(settings) if settings is not None else sample_settings(cfg.E, cfg.bounds, seed)
    if len(envs) < 3:
        raise InvalidInputError("need at least 3 environment settings")
    if any(e.damping != 0.0 for e in envs):
        raise InvalidInputError("prior settings must be simulated")
    out = []
    for x in xs:
        policy = condition(table, x)
        ys = np.array([evaluate(policy, tasks, env, cfg.eval_top_k, cfg.horizon, counter).objective for env in envs])
        mean = float(ys.mean())
        var = float(ys.var(ddof=1))
        try:
            _, p = ks_test(ys, mean, var)
        except DegenerateDistributionError:
            p = 0.0
        kept = var > 0.0 and p >= cfg.gamma
        out.append(PriorObservation(tuple(float(v) for v in x), mean, var, float(p), bool(kept)))
    return out


def kept_only(prior: Sequence[PriorObservation]) -> list[PriorObservation]:
    return [p for p in prior if p.kept]


def prior_arrays(prior: Sequence[PriorObservation], dim: int):
    """(x, mean, var) arrays ready for a GP observation set."""
    if not prior:
        return np.zeros((0, dim)), np.zeros(0), np.zeros(0)
    x = np.array([p.x for p in prior], dtype=float)
    return x, np.array([p.mean for p in prior]), np.array([p.var for p in prior])


def prior_fields(dim: int) -> list[str]:
    return [f"theta_{i + 1}" for i in range(dim)] + ["mu", "var", "p_value", "kept"]


def write_prior(path, prior: Sequence[PriorObservation], dim: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(prior_fields(dim))
        for p in prior:
            w.writerow([repr(float(v)) for v in p.x] + [repr(p.mean), repr(p.var), repr(p.p_value), int(p.kept)])


def read_prior(path) -> list[PriorObservation]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[-4:] != ["mu", "var", "p_value", "kept"]:
            raise InvalidInputError(f"{path}: not a prior file")
        d = len(header) - 4
        if header != prior_fields(d):
            raise InvalidInputError(f"{path}: unexpected header {header}")
        out = []
        for row in reader:
            vals = [float(v) for v in row[:-1]]
            out.append(PriorObservation(tuple(vals[:d]), vals[d], vals[d + 1], vals[d + 2], bool(int(row[-1]))))
    return out
