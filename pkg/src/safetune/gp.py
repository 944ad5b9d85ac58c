"""Contextual Gaussian-process surrogate over (configuration, context) pairs.

Additive kernel: Matern-5/2 with ARD lengthscales on normalized configuration
coordinates, plus a linear kernel on context vectors. Posterior computations
go through a Cholesky factor of (K + noise*I); hyperparameters are chosen by
derivative-free coordinate search on the log marginal likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

SQRT5 = math.sqrt(5.0)

# log-space search bounds for hyperparameter fitting
LS_BOUNDS = (1e-2, 10.0)
VAR_BOUNDS = (1e-3, 10.0)
NOISE_BOUNDS = (1e-6, 1.0)

JITTER_START = 1e-10
JITTER_MAX = 1e-4


class GPError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelParams:
    matern_lengthscales: np.ndarray  # one per configuration dim (ARD)
    matern_variance: float
    linear_variance: float
    noise_variance: float

    def __post_init__(self) -> None:
        ls = np.asarray(self.matern_lengthscales, dtype=float)
        object.__setattr__(self, "matern_lengthscales", ls)
        if np.any(ls <= 0):
            raise GPError("lengthscales must be positive")
        if self.matern_variance <= 0 or self.linear_variance <= 0:
            raise GPError("kernel variances must be positive")
        if self.noise_variance < 0:
            raise GPError("noise variance must be nonnegative")


def default_params(dim: int) -> KernelParams:
    return KernelParams(
        matern_lengthscales=np.full(dim, 0.5),
        matern_variance=1.0,
        linear_variance=1.0,
        noise_variance=0.01,
    )


@dataclass(frozen=True)
class PosteriorEstimate:
    mean: float
    std: float


@dataclass(frozen=True)
class SurrogateModel:
    """Fitted GP: immutable, shareable; all queries run against `chol`."""

    points: np.ndarray  # (n, m) normalized configurations
    contexts: np.ndarray  # (n, d) context vectors
    targets: np.ndarray  # (n,) standardized targets
    target_mean: float
    target_std: float
    params: KernelParams
    chol: np.ndarray  # lower-triangular factor of K + noise*I (+jitter)
    alpha: np.ndarray  # (K + noise*I)^{-1} targets
    log_likelihood: float

    @property
    def n_train(self) -> int:
        return self.points.shape[0]


def matern52(r: np.ndarray | float) -> np.ndarray | float:
    """Matern-5/2 profile at scaled distance r, value 1 at r == 0."""
    sr = SQRT5 * np.asarray(r, dtype=float)
    return (1.0 + sr + sr * sr / 3.0) * np.exp(-sr)


def kernel(
    a: tuple[np.ndarray, np.ndarray],
    b: tuple[np.ndarray, np.ndarray],
    params: KernelParams,
) -> float:
    """Covariance between two (point, context) pairs."""
    pa, ca = np.asarray(a[0], float), np.asarray(a[1], float)
    pb, cb = np.asarray(b[0], float), np.asarray(b[1], float)
    if pa.shape != pb.shape or ca.shape != cb.shape:
        raise GPError("dimension mismatch between kernel inputs")
    if pa.shape != params.matern_lengthscales.shape:
        raise GPError("point dimension does not match lengthscales")
    r = math.sqrt(float(np.sum(((pa - pb) / params.matern_lengthscales) ** 2)))
    return params.matern_variance * float(matern52(r)) + params.linear_variance * float(
        ca @ cb
    )


def _cross_kernel(
    pts_a: np.ndarray,
    ctx_a: np.ndarray,
    pts_b: np.ndarray,
    ctx_b: np.ndarray,
    params: KernelParams,
) -> np.ndarray:
    inv = 1.0 / params.matern_lengthscales
    da = pts_a * inv
    db = pts_b * inv
    sq = (
        np.sum(da * da, axis=1)[:, None]
        + np.sum(db * db, axis=1)[None, :]
        - 2.0 * da @ db.T
    )
    r = np.sqrt(np.maximum(sq, 0.0))
    return params.matern_variance * matern52(r) + params.linear_variance * (
        ctx_a @ ctx_b.T
    )


def _chol_with_jitter(K: np.ndarray, noise: float) -> tuple[np.ndarray, float]:
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            L = cholesky(K + (noise + jitter) * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX:
            raise GPError("Gram matrix not positive definite after jitter escalation")


class _FitCache:
    """Per-dataset precomputation reused across likelihood evaluations."""

    def __init__(self, points: np.ndarray, contexts: np.ndarray, y: np.ndarray):
        diff = points[:, None, :] - points[None, :, :]
        self.dsq = diff * diff  # (n, n, m)
        self.ctx_gram = contexts @ contexts.T
        self.y = y
        self.n = points.shape[0]

    def gram(self, params: KernelParams) -> np.ndarray:
        inv2 = 1.0 / (params.matern_lengthscales**2)
        r = np.sqrt(np.maximum(self.dsq @ inv2, 0.0))
        return params.matern_variance * matern52(r) + params.linear_variance * self.ctx_gram

    def log_likelihood(self, params: KernelParams) -> float:
        try:
            L, _ = _chol_with_jitter(self.gram(params), params.noise_variance)
        except GPError:
            return -np.inf
        a = cho_solve((L, True), self.y)
        return float(
            -0.5 * self.y @ a
            - np.sum(np.log(np.diag(L)))
            - 0.5 * self.n * math.log(2.0 * math.pi)
        )


def dense_log_likelihood(
    points: np.ndarray, contexts: np.ndarray, y: np.ndarray, params: KernelParams
) -> float:
    """Direct dense-inverse likelihood; independent check path for tests."""
    n = len(y)
    K = _cross_kernel(points, contexts, points, contexts, params)
    A = K + params.noise_variance * np.eye(n)
    sign, logdet = np.linalg.slogdet(A)
    if sign <= 0:
        return -np.inf
    return float(-0.5 * y @ np.linalg.solve(A, y) - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


def _clip_params(params: KernelParams) -> KernelParams:
    return KernelParams(
        matern_lengthscales=np.clip(params.matern_lengthscales, *LS_BOUNDS),
        matern_variance=float(np.clip(params.matern_variance, *VAR_BOUNDS)),
        linear_variance=float(np.clip(params.linear_variance, *VAR_BOUNDS)),
        noise_variance=float(np.clip(params.noise_variance, *NOISE_BOUNDS)),
    )


def _search_starts(dim: int, rng: np.random.Generator) -> list[KernelParams]:
    starts = [
        default_params(dim),
        KernelParams(
            matern_lengthscales=np.full(dim, 0.15),
            matern_variance=1.0,
            linear_variance=0.1,
            noise_variance=1e-3,
        ),
    ]
    ls = np.exp(rng.uniform(np.log(0.05), np.log(2.0), size=dim))
    starts.append(
        KernelParams(
            matern_lengthscales=ls,
            matern_variance=float(np.exp(rng.uniform(np.log(0.1), np.log(5.0)))),
            linear_variance=float(np.exp(rng.uniform(np.log(0.01), np.log(5.0)))),
            noise_variance=float(np.exp(rng.uniform(np.log(1e-5), np.log(0.1)))),
        )
    )
    return starts


def _coordinate_search(
    cache: _FitCache, start: KernelParams, sweeps: int = 2
) -> tuple[KernelParams, float]:
    """Greedy per-parameter moves on log scale with a shrinking step factor."""
    dim = start.matern_lengthscales.shape[0]
    cur = _clip_params(start)
    best = cache.log_likelihood(cur)

    def try_set(candidate: KernelParams, best_val: float) -> tuple[KernelParams, float, bool]:
        candidate = _clip_params(candidate)
        val = cache.log_likelihood(candidate)
        if val > best_val:
            return candidate, val, True
        return cur, best_val, False

    for sweep in range(sweeps):
        factor = 4.0 / (2.0**sweep)
        for i in range(dim):
            for f in (factor, 1.0 / factor):
                ls = cur.matern_lengthscales.copy()
                ls[i] *= f
                cur, best, _ = try_set(replace(cur, matern_lengthscales=ls), best)
        for attr in ("matern_variance", "linear_variance", "noise_variance"):
            for f in (factor, 1.0 / factor):
                cur, best, _ = try_set(
                    replace(cur, **{attr: getattr(cur, attr) * f}), best
                )
    return cur, best


def fit(
    points: np.ndarray,
    contexts: np.ndarray,
    targets: np.ndarray,
    params: KernelParams | None = None,
    optimize: bool = True,
    rng: np.random.Generator | None = None,
    max_points: int | None = None,
) -> SurrogateModel:
    """Fit a surrogate on raw arrays.

    Targets are standardized internally; `max_points` keeps only the most
    recent rows (the per-cluster cap). With `optimize=False` the given (or
    default) kernel parameters are used as-is and only the factorization runs.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    if len(targets) == 0:
        raise GPError("at least one observation required")
    if points.shape[0] != len(targets) or contexts.shape[0] != len(targets):
        raise GPError("points/contexts/targets must have matching lengths")
    if max_points is not None and len(targets) > max_points:
        points = points[-max_points:]
        contexts = contexts[-max_points:]
        targets = targets[-max_points:]

    t_mean = float(np.mean(targets))
    t_std = float(np.std(targets))
    if t_std < 1e-12:
        t_std = 1.0
    y = (targets - t_mean) / t_std

    cache = _FitCache(points, contexts, y)
    if params is None:
        params = default_params(points.shape[1])
    params = _clip_params(params)

    if optimize:
        rng = rng if rng is not None else np.random.default_rng(0)
        best_params, best_ll = params, cache.log_likelihood(params)
        for start in _search_starts(points.shape[1], rng):
            cand, ll = _coordinate_search(cache, start)
            if ll > best_ll:
                best_params, best_ll = cand, ll
        params, loglik = best_params, best_ll
    else:
        loglik = cache.log_likelihood(params)

    L, _ = _chol_with_jitter(cache.gram(params), params.noise_variance)
    alpha = cho_solve((L, True), y)
    return SurrogateModel(
        points=points,
        contexts=contexts,
        targets=y,
        target_mean=t_mean,
        target_std=t_std,
        params=params,
        chol=L,
        alpha=alpha,
        log_likelihood=loglik,
    )


def refit(model: SurrogateModel, points, contexts, targets, max_points=None) -> SurrogateModel:
    """Refactorize with the model's existing hyperparameters on new data."""
    return fit(
        points, contexts, targets, params=model.params, optimize=False, max_points=max_points
    )


def posterior_batch(
    model: SurrogateModel, points: np.ndarray, contexts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean/std (original units) at a batch of query pairs."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    if points.shape[1] != model.points.shape[1]:
        raise GPError("query point dimension mismatch")
    if contexts.shape[1] != model.contexts.shape[1]:
        raise GPError("query context dimension mismatch")
    k = _cross_kernel(model.points, model.contexts, points, contexts, model.params)
    mean_std = k.T @ model.alpha
    v = solve_triangular(model.chol, k, lower=True)
    prior = model.params.matern_variance + model.params.linear_variance * np.sum(
        contexts * contexts, axis=1
    )
    var = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
    mean = model.target_mean + model.target_std * mean_std
    std = model.target_std * np.sqrt(var)
    return mean, std


def posterior(model: SurrogateModel, point: np.ndarray, context: np.ndarray) -> PosteriorEstimate:
    mean, std = posterior_batch(model, point[None, :], context[None, :])
    return PosteriorEstimate(mean=float(mean[0]), std=float(std[0]))


def bounds(
    model: SurrogateModel, point: np.ndarray, context: np.ndarray, beta: float
) -> tuple[float, float]:
    """Confidence interval mean -/+ beta*std at one query pair."""
    if beta < 0:
        raise GPError("beta must be nonnegative")
    est = posterior(model, point, context)
    return est.mean - beta * est.std, est.mean + beta * est.std
