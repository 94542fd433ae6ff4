"""Comparison scorers: raw-series MAE against the twin and PCA
reconstruction error."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def mae_score(twin_window, real_window) -> float:
    """Mean absolute difference over aligned channels and timesteps."""
    a = np.atleast_2d(np.asarray(twin_window, dtype=np.float64))
    b = np.atleast_2d(np.asarray(real_window, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError("windows must be aligned with equal shapes")
    return float(np.mean(np.abs(a - b)))


@dataclass
class PcaModel:
    components: np.ndarray  # (q, n_features), orthonormal rows
    mean: np.ndarray

    def __post_init__(self):
        self.components = np.atleast_2d(np.asarray(self.components, dtype=np.float64))
        self.mean = np.asarray(self.mean, dtype=np.float64)
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(len(self.components)), atol=1e-8):
            raise ValueError("components must be orthonormal")

    @property
    def q(self) -> int:
        return len(self.components)

    def to_json(self) -> str:
        return json.dumps(
            {"components": self.components.tolist(), "mean": self.mean.tolist()},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        doc = json.loads(text)
        return cls(components=np.asarray(doc["components"]), mean=np.asarray(doc["mean"]))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "PcaModel":
        return cls.from_json(Path(path).read_text())


def fit_pca(X, q: int | None = None, variance_fraction: float = 0.95) -> PcaModel:
    """Top-q principal directions of the training covariance.

    When q is None the smallest q retaining `variance_fraction` of the
    total variance is used (but always q < n_features).  Component signs
    are fixed so the largest-magnitude entry is positive.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    if n <= d:
        raise ValueError("need more samples than features")
    mean = X.mean(axis=0)
    cov = (X - mean).T @ (X - mean) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.maximum(eigvals[::-1], 1e-12)
    eigvecs = eigvecs[:, ::-1]
    if q is None:
        ratio = np.cumsum(eigvals) / eigvals.sum()
        q = int(np.searchsorted(ratio, variance_fraction) + 1)
        q = min(q, d - 1)
    if not 1 <= q < d:
        raise ValueError("need 1 <= q < n_features")
    components = eigvecs[:, :q].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(components=components, mean=mean)


def pca_score(model: PcaModel, X) -> np.ndarray:
    """Squared reconstruction error ||x - (mean + V V^T (x - mean))||^2."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    centered = X - model.mean
    projected = centered @ model.components.T @ model.components
    residual = centered - projected
    return np.einsum("ij,ij->i", residual, residual)
