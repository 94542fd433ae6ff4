"""k-means on normal data and the cluster-centers anomaly score.

The score of a sample is its Euclidean distance to the nearest cluster
center, plus an optional penalty eta / (distance to nearest labeled
anomaly + zeta).  With an empty anomaly set or eta = 0 the score reduces
exactly to the nearest-center distance (unsupervised mode).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_ETA = 0.15
DEFAULT_ZETA = 0.001
DEFAULT_N_CLUSTERS = 32


@dataclass
class ClusterModel:
    centers: np.ndarray  # (n_clusters, n_features)
    eta: float = 0.0
    zeta: float = DEFAULT_ZETA
    anomaly_set: np.ndarray | None = None  # (n_anomalies, n_features)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        if len(self.centers) < 1 or not np.all(np.isfinite(self.centers)):
            raise ValueError("need at least one finite cluster center")
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.anomaly_set is not None:
            self.anomaly_set = np.atleast_2d(np.asarray(self.anomaly_set, dtype=np.float64))
            if self.anomaly_set.size == 0:
                self.anomaly_set = None

    def to_json(self) -> str:
        doc = {
            "centers": self.centers.tolist(),
            "eta": self.eta,
            "zeta": self.zeta,
            "anomaly_set": None if self.anomaly_set is None else self.anomaly_set.tolist(),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        doc = json.loads(text)
        anomalies = doc["anomaly_set"]
        return cls(
            centers=np.asarray(doc["centers"]),
            eta=doc["eta"],
            zeta=doc["zeta"],
            anomaly_set=None if anomalies is None else np.asarray(anomalies),
        )

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ClusterModel":
        return cls.from_json(Path(path).read_text())


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, (len(a), len(b))."""
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeans_pp_init(X: np.ndarray, n_clusters: int, rng) -> np.ndarray:
    """k-means++ seeding: each next center drawn with probability
    proportional to squared distance from the chosen set."""
    n = len(X)
    centers = np.empty((n_clusters, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = np.sum((X - centers[0]) ** 2, axis=1)
    for j in range(1, n_clusters):
        total = closest.sum()
        if total == 0.0:
            centers[j] = X[rng.integers(n)]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(closest), r))
        centers[j] = X[min(idx, n - 1)]
        closest = np.minimum(closest, np.sum((X - centers[j]) ** 2, axis=1))
    return centers


def kmeans_objective(X: np.ndarray, centers: np.ndarray) -> float:
    """Within-cluster sum of squared distances."""
    return float(_pairwise_sq(X, centers).min(axis=1).sum())


def fit_kmeans(X, n_clusters: int, seed: int = 0, tol: float = 1e-6, max_iter: int = 300):
    """Lloyd's algorithm with k-means++ seeding.

    Iterates until the largest center movement drops below `tol` or
    `max_iter` rounds; an emptied cluster is reseeded to the point
    farthest from its nearest center.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if n_clusters > len(X):
        raise ValueError("n_clusters exceeds number of samples")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(X, n_clusters, rng)
    for _ in range(max_iter):
        sq = _pairwise_sq(X, centers)
        assign = sq.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(n_clusters):
            members = assign == j
            if members.any():
                new_centers[j] = X[members].mean(axis=0)
            else:
                farthest = sq.min(axis=1).argmax()
                new_centers[j] = X[farthest]
        movement = np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)).max()
        centers = new_centers
        if movement < tol:
            break
    return centers


def cc_score(model: ClusterModel, X) -> np.ndarray:
    """Nearest-center distance plus the labeled-anomaly penalty term."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    score = np.sqrt(_pairwise_sq(X, model.centers).min(axis=1))
    if model.eta > 0 and model.anomaly_set is not None:
        nearest_anom = np.sqrt(_pairwise_sq(X, model.anomaly_set).min(axis=1))
        score = score + model.eta / (nearest_anom + model.zeta)
    return score


def knn_score(train, X, k: int = 5) -> np.ndarray:
    """Mean Euclidean distance to the k nearest training samples."""
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if k > len(train):
        raise ValueError("k exceeds number of training samples")
    out = np.empty(len(X))
    # chunked to bound the distance-matrix size
    step = max(1, 2_000_000 // max(len(train), 1))
    for lo in range(0, len(X), step):
        d = np.sqrt(_pairwise_sq(X[lo : lo + step], train))
        part = np.partition(d, k - 1, axis=1)[:, :k]
        out[lo : lo + step] = part.mean(axis=1)
    return out


def choose_n_clusters(normals, candidates, evaluate, seed: int = 0):
    """Pick the candidate cluster count maximizing a validation objective.

    `evaluate(centers) -> score`; ties go to the earlier candidate.
    Returns (best_candidate, trace) with per-candidate scores.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("need at least one candidate")
    trace = []
    best, best_score = None, -np.inf
    for k in candidates:
        centers = fit_kmeans(normals, k, seed=seed)
        score = float(evaluate(centers))
        trace.append({"n_clusters": k, "score": score})
        if score > best_score:
            best, best_score = k, score
    return best, trace
