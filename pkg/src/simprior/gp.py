"""Gaussian-process regression with prior rows as heteroscedastic observations.

Synthetic prior observations carry their own variance on the covariance
diagonal (plus a sim-to-real allowance); real observations share one small
noise variance. Inputs are expected in normalized coordinates; the search
layer maps latents into the unit cube before building observations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from simprior import rng as _rng
from simprior.errors import IllConditionedError, InvalidInputError, NotFittedError

MAX_CONDITION = 25_000.0
JITTERS = (0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
STD_FLOOR = 1e-8
DEFAULT_REAL_NOISE = 1e-4
DEFAULT_SIM2REAL = 0.01
LOG_LENGTHSCALE_BOUNDS = (math.log(1e-2), math.log(1e1))
LOG_SIGNAL_BOUNDS = (math.log(1e-3), math.log(1e3))


@dataclass(frozen=True)
class KernelHyper:
    lengthscales: tuple[float, ...]
    signal_variance: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in np.atleast_1d(self.lengthscales)))
        if any(not l > 0.0 for l in self.lengthscales) or not self.signal_variance > 0.0:
            raise InvalidInputError("kernel hyperparameters must be strictly positive")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def to_log(self) -> np.ndarray:
        return np.log(np.r_[self.lengthscales, self.signal_variance])

    @classmethod
    def from_log(cls, params) -> "KernelHyper":
        p = np.exp(np.asarray(params, dtype=float))
        return cls(tuple(p[:-1]), float(p[-1]))


def kernel(x, x2, hyper: KernelHyper) -> float:
    """RBF covariance ``s2 * exp(-0.5 * sum(((x - x2) / l)**2))``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.shape != (hyper.dim,):
        raise InvalidInputError(f"dimension mismatch: {x.shape}, {x2.shape}, lengthscales {hyper.dim}")
    r = (x - x2) / np.asarray(hyper.lengthscales)
    return float(hyper.signal_variance * math.exp(-0.5 * float(np.dot(r, r))))


def kernel_matrix(X1, X2, hyper: KernelHyper) -> np.ndarray:
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != hyper.dim or X2.shape[1] != hyper.dim:
        raise InvalidInputError("dimension mismatch between inputs and lengthscales")
    ls = np.asarray(hyper.lengthscales)
    A = X1 / ls
    B = X2 / ls
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(d2, 0.0, out=d2)
    return hyper.signal_variance * np.exp(-0.5 * d2)


@dataclass(frozen=True)
class ObservationSet:
    """Prior rows ``(x, mean, variance)`` followed by real rows ``(x, y)``."""

    prior_x: np.ndarray = field(repr=False)
    prior_y: np.ndarray = field(repr=False)
    prior_var: np.ndarray = field(repr=False)
    real_x: np.ndarray = field(repr=False)
    real_y: np.ndarray = field(repr=False)
    real_noise_var: float = DEFAULT_REAL_NOISE
    sim2real: float = DEFAULT_SIM2REAL

    def __post_init__(self):
        px = np.asarray(self.prior_x, dtype=float)
        rx = np.asarray(self.real_x, dtype=float)
        dims = {a.shape[1] for a in (px, rx) if a.ndim == 2 and a.shape[1] > 0}
        if len(dims) > 1:
            raise InvalidInputError(f"prior and real inputs disagree on dimension: {sorted(dims)}")
        dim = dims.pop() if dims else 0
        object.__setattr__(self, "prior_x", px.reshape(-1, dim))
        object.__setattr__(self, "real_x", rx.reshape(-1, dim))
        for name in ("prior_y", "prior_var", "real_y"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if not (len(self.prior_x) == len(self.prior_y) == len(self.prior_var)):
            raise InvalidInputError("prior x, y and var must have equal length")
        if len(self.real_x) != len(self.real_y):
            raise InvalidInputError("real x and y must have equal length")
        if np.any(~np.isfinite(self.prior_var)) or np.any(self.prior_var < 0.0):
            raise InvalidInputError("prior variances must be finite and >= 0")
        if not self.real_noise_var >= 0.0 or not self.sim2real >= 0.0:
            raise InvalidInputError("noise terms must be >= 0")

    @classmethod
    def empty(cls, dim: int, **kw) -> "ObservationSet":
        z = np.zeros((0, dim))
        return cls(z, np.zeros(0), np.zeros(0), z.copy(), np.zeros(0), **kw)

    @property
    def n_prior(self) -> int:
        return len(self.prior_y)

    @property
    def n_real(self) -> int:
        return len(self.real_y)

    def __len__(self):
        return self.n_prior + self.n_real

    @property
    def dim(self) -> int:
        return self.prior_x.shape[1] if self.n_prior else self.real_x.shape[1]

    @property
    def X(self) -> np.ndarray:
        if self.n_prior == 0:
            return self.real_x
        if self.n_real == 0:
            return self.prior_x
        return np.vstack([self.prior_x, self.real_x])

    @property
    def y(self) -> np.ndarray:
        return np.r_[self.prior_y, self.real_y]

    def add_real(self, x, y: float) -> "ObservationSet":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        rx = x if self.n_real == 0 else np.vstack([self.real_x, x])
        return replace(self, real_x=rx, real_y=np.r_[self.real_y, float(y)])

    def standardization(self) -> tuple[float, float]:
        """Precision-weighted mean and std over all rows.

        Real rows have weight 1; a prior row with variance ``v`` has weight
        ``1 / (1 + v / s2)`` where ``s2`` is the unweighted sample variance.
        With zero prior variances this is plain standardization; as ``v``
        grows the prior rows stop influencing the scale.
        """
        y = self.y
        s2 = max(float(np.var(y)), STD_FLOOR ** 2)
        w = np.r_[1.0 / (1.0 + self.prior_var / s2), np.ones(self.n_real)]
        mean = float(np.dot(w, y) / w.sum())
        std = math.sqrt(float(np.dot(w, (y - mean) ** 2) / w.sum()))
        return mean, max(std, STD_FLOOR)

    def noise_diagonal(self, std: float = 1.0) -> np.ndarray:
        """Diagonal noise in standardized units: prior ``var/std^2 + eps``, real ``sigma_r^2``."""
        return np.r_[self.prior_var / std ** 2 + self.sim2real, np.full(self.n_real, self.real_noise_var)]


def build_augmented_cov(obs: ObservationSet, hyper: KernelHyper, std: float = 1.0) -> np.ndarray:
    """Covariance of all rows plus the block-diagonal noise, prior rows first.

    ``std`` rescales prior variances into standardized units; with the default
    of 1 the prior variances are added as given.
    """
    if len(obs) < 1:
        raise InvalidInputError("need at least one observation")
    K = kernel_matrix(obs.X, obs.X, hyper)
    K[np.diag_indices_from(K)] += obs.noise_diagonal(std)
    return K


def condition_number(K: np.ndarray) -> float:
    """2-norm condition number of the Jacobi-scaled matrix ``D^-1/2 K D^-1/2``.

    Scaling by the diagonal keeps rows with very large noise (vague prior
    observations) from dominating the bound. Returns ``inf`` when ``K`` is
    not positive definite.
    """
    d = np.sqrt(np.diag(K))
    if not np.all(d > 0.0):
        return math.inf
    lam = np.linalg.eigvalsh(K / d[:, None] / d[None, :])
    if not lam[0] > 0.0:
        return math.inf
    return float(lam[-1] / lam[0])


def _guarded_cholesky(K: np.ndarray, signal_variance: float):
    """Add jitter (relative to the signal variance) until the condition bound holds."""
    for j in JITTERS:
        Kj = K if j == 0.0 else K + (j * signal_variance) * np.eye(len(K))
        if condition_number(Kj) > MAX_CONDITION:
            continue
        try:
            return np.linalg.cholesky(Kj), j * signal_variance
        except np.linalg.LinAlgError:
            continue
    raise IllConditionedError(
        f"covariance condition number stays above {MAX_CONDITION:g} at jitter {JITTERS[-1]} x signal variance "
        f"(n={len(K)}, signal variance {signal_variance:g})"
    )


@dataclass(frozen=True)
class GpModel:
    hyper: KernelHyper
    obs: ObservationSet = field(repr=False)
    X: np.ndarray = field(repr=False)
    y_std: np.ndarray = field(repr=False)
    y_mean: float = 0.0
    y_scale: float = 1.0
    jitter: float = 0.0
    chol: np.ndarray = field(default=None, repr=False)
    alpha: np.ndarray = field(default=None, repr=False)

    def covariance(self) -> np.ndarray:
        """The factorized matrix, jitter included."""
        return self.chol @ self.chol.T


def fit(obs: ObservationSet, hyper: KernelHyper) -> GpModel:
    if len(obs) < 1:
        raise InvalidInputError("need at least one observation")
    y = obs.y
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("observations must be finite")
    mean, std = obs.standardization()
    ys = (y - mean) / std
    K = build_augmented_cov(obs, hyper, std)
    L, jitter = _guarded_cholesky(K, hyper.signal_variance)
    alpha = solve_triangular(L.T, solve_triangular(L, ys, lower=True), lower=False)
    return GpModel(hyper, obs, obs.X, ys, mean, std, jitter, L, alpha)


def predict(model: GpModel, x) -> tuple[np.ndarray, np.ndarray] | tuple[float, float]:
    """Posterior mean and variance of the latent function, de-standardized.

    A single point returns floats; an (m, d) array returns two length-m arrays.
    """
    if model is None or model.chol is None:
        raise NotFittedError("model has not been fitted")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = x.reshape(1, -1) if single else x
    Ks = kernel_matrix(Xq, model.X, model.hyper)
    mean = Ks @ model.alpha
    v = solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
    var = model.hyper.signal_variance - np.einsum("ij,ij->j", v, v)
    np.maximum(var, 0.0, out=var)
    mean = mean * model.y_scale + model.y_mean
    var = var * model.y_scale ** 2
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def log_marginal_likelihood(model: GpModel) -> float:
    n = len(model.y_std)
    return float(-0.5 * model.y_std @ model.alpha - np.log(np.diag(model.chol)).sum() - 0.5 * n * math.log(2 * math.pi))


def _lml_at(log_params, X, ys, noise):
    try:
        hyper = KernelHyper.from_log(log_params)
        K = kernel_matrix(X, X, hyper)
        K[np.diag_indices_from(K)] += noise
        L, _ = _guarded_cholesky(K, hyper.signal_variance)
    except (IllConditionedError, InvalidInputError, FloatingPointError):
        return -math.inf
    a = solve_triangular(L, ys, lower=True, check_finite=False)
    return float(-0.5 * a @ a - np.log(np.diag(L)).sum() - 0.5 * len(ys) * math.log(2 * math.pi))


def optimize_hyper(obs: ObservationSet, log_bounds=None, restarts: int = 3, iterations: int = 50,
                   seed: int = 0, init: KernelHyper | None = None, min_step: float = 1e-2) -> KernelHyper:
    """Maximize the log marginal likelihood by multi-start coordinate ascent in log space.

    Restart 0 starts from ``init`` (or the centre of the log box); the rest
    start from uniform draws seeded by ``(seed, "hyper", r)``. Each restart
    probes +/- a step along every coordinate, keeps improvements, and halves
    the step after a pass without one.
    """
    if len(obs) < 2:
        raise InvalidInputError("hyperparameter search needs at least two observations")
    d = obs.dim
    if log_bounds is None:
        log_bounds = [LOG_LENGTHSCALE_BOUNDS] * d + [LOG_SIGNAL_BOUNDS]
    lo = np.array([b[0] for b in log_bounds])
    hi = np.array([b[1] for b in log_bounds])
    mean, std = obs.standardization()
    ys = (obs.y - mean) / std
    X = obs.X
    noise = obs.noise_diagonal(std)

    best_p, best_f = None, -math.inf
    for r in range(restarts):
        if r == 0:
            p = np.clip(init.to_log(), lo, hi) if init is not None else 0.5 * (lo + hi)
        else:
            p = _rng.generator(seed, "hyper", r).uniform(lo, hi)
        f = _lml_at(p, X, ys, noise)
        step = 0.25 * float(np.max(hi - lo)) / 2.0
        for _ in range(iterations):
            improved = False
            for k in range(len(p)):
                for sgn in (1.0, -1.0):
                    q = p.copy()
                    q[k] = min(max(q[k] + sgn * step, lo[k]), hi[k])
                    if q[k] == p[k]:
                        continue
                    fq = _lml_at(q, X, ys, noise)
                    if fq > f:
                        p, f, improved = q, fq, True
                        break
            if not improved:
                step *= 0.5
                if step < min_step:
                    break
        if f > best_f:
            best_p, best_f = p, f
    if best_p is None or not math.isfinite(best_f):
        raise IllConditionedError("no hyperparameter setting produced a usable covariance")
    return KernelHyper.from_log(best_p)
