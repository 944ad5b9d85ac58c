"""Context clustering and per-cluster model management.

Observations are clustered by context (DBSCAN); each cluster owns a surrogate
model, a trust region, and streak counters. A linear classifier routes new
contexts to clusters. Re-clustering is triggered when a freshly simulated
clustering diverges from the stored one (normalized mutual information below
a threshold, or a different cluster count).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .knobs import KnobSpace
from .repository import Observation
from .subspace import AdaptState, Subspace, fresh_hypercube


class RegistryError(RuntimeError):
    pass


# --- clustering ---------------------------------------------------------------


def dbscan(contexts: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Euclidean DBSCAN, deterministic: clusters expand from core points in
    index order; border points keep the first cluster that reaches them.

    Returns one label per row, -1 for noise.
    """
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    n = X.shape[0]
    if n == 0:
        raise RegistryError("at least one context required")
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    reach = d2 <= eps * eps + 1e-18
    neighbor_lists = [np.flatnonzero(reach[i]) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbor_lists])

    labels = np.full(n, -1, dtype=int)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = deque(neighbor_lists[i])
        while queue:
            j = queue.popleft()
            if labels[j] != -1:
                continue
            labels[j] = cluster
            if core[j]:
                queue.extend(neighbor_lists[j])
        cluster += 1
    return labels


def knn_eps(contexts: np.ndarray, k: int = 5) -> float:
    """Median k-th-neighbor distance; scale-adaptive eps heuristic."""
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    n = X.shape[0]
    if n < 2:
        return 0.1
    kk = min(k, n - 1)
    sq = np.sum(X * X, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    d = np.sqrt(d2)
    kth = np.sort(d, axis=1)[:, kk]  # column 0 is the point itself
    return max(float(np.median(kth)), 1e-9)


def _entropy(labels: np.ndarray) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized mutual information I(a;b)/sqrt(H(a)H(b)) in [0,1].

    Defined as 1.0 whenever either labeling carries no information (zero
    entropy), so a constant labeling never signals drift by itself.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise RegistryError("labelings must have equal length")
    ha, hb = _entropy(a), _entropy(b)
    if ha == 0.0 or hb == 0.0:
        return 1.0
    n = len(a)
    mi = 0.0
    for va, ca in zip(*np.unique(a, return_counts=True)):
        mask_a = a == va
        for vb, cb in zip(*np.unique(b[mask_a], return_counts=True)):
            nab = cb
            pa = ca / n
            pb = float(np.sum(b == vb)) / n
            pab = nab / n
            mi += pab * math.log(pab / (pa * pb))
    return float(min(max(mi / math.sqrt(ha * hb), 0.0), 1.0))


# --- classifier ---------------------------------------------------------------


class LinearClassifier:
    """One-vs-rest linear SVM trained by stochastic subgradient descent.

    Prediction is argmax margin; exact ties resolve to the lowest cluster id.
    """

    def __init__(self, classes: np.ndarray, weights: np.ndarray):
        self.classes = classes  # sorted ascending
        self.weights = weights  # (k, d+1), last column is the bias

    def predict(self, context: np.ndarray) -> int:
        x = np.append(np.asarray(context, dtype=float), 1.0)
        scores = self.weights @ x
        return int(self.classes[int(np.argmax(scores))])


def _pegasos(
    X: np.ndarray, y: np.ndarray, rng: np.random.Generator, lam: float, epochs: int
) -> np.ndarray:
    n, d = X.shape
    w = np.zeros(d)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (w @ X[i])
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * X[i]
    return w


def train_classifier(
    contexts: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    lam: float = 1e-3,
    epochs: int = 60,
) -> LinearClassifier:
    """Fit the routing classifier; noise labels must be resolved beforehand."""
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if np.any(labels < 0):
        raise RegistryError("resolve noise labels before training the classifier")
    classes = np.unique(labels)
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    if len(classes) == 1:
        # constant predictor
        return LinearClassifier(classes, np.zeros((1, Xb.shape[1])))
    W = np.zeros((len(classes), Xb.shape[1]))
    for row, c in enumerate(classes):
        y = np.where(labels == c, 1.0, -1.0)
        W[row] = _pegasos(Xb, y, rng, lam, epochs)
    return LinearClassifier(classes, W)


def assign_noise_to_clusters(contexts: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Give every noise point the label of the nearest cluster centroid.

    A labeling with no clusters at all collapses to a single cluster 0 so
    every observation stays usable.
    """
    labels = np.asarray(labels, dtype=int).copy()
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    ids = np.unique(labels[labels >= 0])
    if len(ids) == 0:
        return np.zeros(len(labels), dtype=int)
    centroids = np.stack([X[labels == c].mean(axis=0) for c in ids])
    for i in np.flatnonzero(labels < 0):
        d = np.linalg.norm(centroids - X[i], axis=1)
        labels[i] = int(ids[int(np.argmin(d))])
    return labels


# --- registry -----------------------------------------------------------------


@dataclass
class ClusterState:
    model: gp.SurrogateModel
    subspace: Subspace
    adapt: AdaptState
    obs_idx: list[int]  # repo indices, most recent `cap` retained for fitting
    best_point: np.ndarray
    best_value: float
    phase_start_best: float
    has_unevaluated_safe: bool = True
    new_since_hyperopt: int = 0


class ModelRegistry:
    """Owner of the cluster labeling, per-cluster models, and the router."""

    def __init__(
        self,
        space: KnobSpace,
        mi_threshold: float = 0.5,
        cluster_cap: int = 300,
        min_pts: int = 5,
        base_radius: float = 0.05,
        eta_succ: int = 3,
        eta_fail: int = 3,
        single_cluster: bool = False,
    ):
        self.space = space
        self.mi_threshold = mi_threshold
        self.cluster_cap = cluster_cap
        self.min_pts = min_pts
        self.base_radius = base_radius
        self.eta_succ = eta_succ
        self.eta_fail = eta_fail
        self.single_cluster = single_cluster
        self.clusters: dict[int, ClusterState] = {}
        self.labels: np.ndarray | None = None  # raw labeling incl. -1 noise
        self.classifier: LinearClassifier | None = None
        self.relearn_count = 0

    @property
    def is_empty(self) -> bool:
        return not self.clusters

    def select_model(self, context: np.ndarray) -> int:
        if self.is_empty or self.classifier is None:
            raise RegistryError("registry is empty; bootstrap first")
        return self.classifier.predict(context)

    def _simulate_labels(self, contexts: np.ndarray) -> np.ndarray:
        if self.single_cluster:
            return np.zeros(contexts.shape[0], dtype=int)
        return dbscan(contexts, knn_eps(contexts, 5), self.min_pts)

    def maybe_recluster(
        self, repo: list[Observation], rng: np.random.Generator, default_point: np.ndarray
    ) -> bool:
        """Re-learn clustering, models, router, and trust regions if the
        simulated fresh clustering diverges from the stored one."""
        if not repo:
            raise RegistryError("empty repository")
        contexts = np.stack([o.context.vector for o in repo])
        fresh = self._simulate_labels(contexts)

        if self.is_empty or self.labels is None:
            need = True
        else:
            k = len(self.labels)
            score = nmi(self.labels, fresh[:k])
            n_old = len(np.unique(self.labels[self.labels >= 0]))
            n_new = len(np.unique(fresh[fresh >= 0]))
            # cluster-count drift guard: zero-entropy labelings score NMI 1.0,
            # which would mask a new distant blob
            need = score < self.mi_threshold or n_old != n_new
        if not need:
            return False

        effective = assign_noise_to_clusters(contexts, fresh)
        self.labels = fresh
        self.classifier = train_classifier(contexts, effective, rng)
        self.clusters = {}
        for cid in np.unique(effective):
            idx = [int(i) for i in np.flatnonzero(effective == cid)]
            idx_fit = idx[-self.cluster_cap :]
            model = gp.fit(
                np.stack([repo[i].point for i in idx_fit]),
                np.stack([repo[i].context.vector for i in idx_fit]),
                np.array([repo[i].performance for i in idx_fit]),
                optimize=True,
                rng=rng,
            )
            best_point, best_value = _best_safe(repo, idx, default_point)
            streak_baseline = max(repo[i].performance for i in idx)
            self.clusters[int(cid)] = ClusterState(
                model=model,
                subspace=fresh_hypercube(best_point, self.base_radius),
                adapt=AdaptState(
                    eta_succ=self.eta_succ,
                    eta_fail=self.eta_fail,
                    last_best_value=streak_baseline,
                ),
                obs_idx=idx_fit,
                best_point=best_point,
                best_value=best_value,
                phase_start_best=best_value,
            )
        self.relearn_count += 1
        return True

    def add_observation(
        self,
        cluster_id: int,
        repo: list[Observation],
        obs_index: int,
        rng: np.random.Generator,
        hyperopt_every: int = 10,
    ) -> None:
        """Append one observation to a cluster and refit its model.

        Hyperparameters are re-optimized every `hyperopt_every` additions;
        in between, only the factorization is refreshed.
        """
        cs = self.clusters[cluster_id]
        cs.obs_idx.append(obs_index)
        if len(cs.obs_idx) > self.cluster_cap:
            cs.obs_idx = cs.obs_idx[-self.cluster_cap :]
        obs = repo[obs_index]
        if obs.safe and obs.performance > cs.best_value:
            cs.best_value = obs.performance
            cs.best_point = obs.point

        pts = np.stack([repo[i].point for i in cs.obs_idx])
        ctx = np.stack([repo[i].context.vector for i in cs.obs_idx])
        y = np.array([repo[i].performance for i in cs.obs_idx])
        cs.new_since_hyperopt += 1
        if cs.new_since_hyperopt >= hyperopt_every:
            cs.model = gp.fit(pts, ctx, y, optimize=True, rng=rng)
            cs.new_since_hyperopt = 0
        else:
            cs.model = gp.fit(pts, ctx, y, params=cs.model.params, optimize=False)


def _best_safe(
    repo: list[Observation], indices: list[int], default_point: np.ndarray
) -> tuple[np.ndarray, float]:
    """Best safe observation of a cluster (the trust-region anchor).

    A cluster with no safe observation anchors at the default configuration
    with value -inf so the first safe observation takes over.
    """
    safe = [i for i in indices if repo[i].safe]
    if not safe:
        return np.asarray(default_point, dtype=float), -math.inf
    best = max(safe, key=lambda i: (repo[i].performance, -i))
    return repo[best].point, repo[best].performance
