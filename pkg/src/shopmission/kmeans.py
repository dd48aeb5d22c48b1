"""Seedable k-means with k-means++ initialization and restarts.

Deterministic given (matrix, k, seed): rows are sorted by entity id before
any sampling, restarts use seeds derived from the run seed, and all
reductions are single-threaded numpy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureMatrix


class KMeansError(Exception):
    pass


@dataclass
class ClusterModel:
    k: int
    centers: np.ndarray  # shape (k, d)
    feature_schema: list
    seed: int
    inertia: float
    iterations_run: int
    inertia_history: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "feature_schema": self.feature_schema,
                "seed": self.seed,
                "inertia": self.inertia,
                "iterations_run": self.iterations_run,
                "inertia_history": self.inertia_history,
                "centers": [list(row) for row in self.centers],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        doc = json.loads(text)
        return cls(
            k=doc["k"],
            centers=np.array(doc["centers"], dtype=float),
            feature_schema=doc["feature_schema"],
            seed=doc["seed"],
            inertia=doc["inertia"],
            iterations_run=doc["iterations_run"],
            inertia_history=doc.get("inertia_history", []),
        )


def _squared_distances(X, centers):
    # (n, k) matrix of squared Euclidean distances
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plusplus_init(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = np.full(n, np.inf)
    for j in range(1, k):
        d2 = np.einsum("nd,nd->n", X - centers[j - 1], X - centers[j - 1])
        np.minimum(closest, d2, out=closest)
        total = closest.sum()
        if total <= 0:
            centers[j] = X[rng.integers(n)]
            continue
        centers[j] = X[rng.choice(n, p=closest / total)]
    return centers


def _repair_empty(X, centers, labels, d2):
    """Re-seed each empty cluster at the point farthest from its own center."""
    k = centers.shape[0]
    own = d2[np.arange(len(labels)), labels].copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        idx = int(np.argmax(own))
        centers[j] = X[idx]
        labels[idx] = j
        own[idx] = 0.0
    return centers, labels


def _lloyd(X, centers, max_iter, tol):
    centers = centers.copy()
    history = []
    iterations = 0
    for _ in range(max_iter):
        d2 = _squared_distances(X, centers)
        labels = np.argmin(d2, axis=1)
        if len(np.unique(labels)) < centers.shape[0]:
            centers, labels = _repair_empty(X, centers, labels, d2)
            d2 = _squared_distances(X, centers)
            labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(labels)), labels].sum()))
        new_centers = np.empty_like(centers)
        for j in range(centers.shape[0]):
            new_centers[j] = X[labels == j].mean(axis=0)
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        iterations += 1
        if shift < tol:
            break
    d2 = _squared_distances(X, centers)
    labels = np.argmin(d2, axis=1)
    # Final assignment may orphan a center; repair keeps k as requested.
    while len(np.unique(labels)) < centers.shape[0]:
        centers, labels = _repair_empty(X, centers, labels, d2)
        for j in range(centers.shape[0]):
            centers[j] = X[labels == j].mean(axis=0)
        d2 = _squared_distances(X, centers)
        labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(labels)), labels].sum())
    history.append(inertia)
    return centers, labels, inertia, iterations, history


def kmeans_fit(
    matrix: FeatureMatrix,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 10,
):
    """Fit k-means; returns (ClusterModel, assignment dict entity_id -> cluster)."""
    X = matrix.X
    if not np.all(np.isfinite(X)):
        raise KMeansError("feature matrix contains non-finite values")
    if k < 1:
        raise KMeansError(f"k must be >= 1, got {k}")
    if max_iter < 1 or tol <= 0:
        raise KMeansError("max_iter must be >= 1 and tol > 0")
    n_distinct = np.unique(X, axis=0).shape[0]
    if k > n_distinct:
        raise KMeansError(
            f"k={k} exceeds number of distinct rows ({n_distinct})"
        )

    best = None
    for restart in range(n_init):
        rng = np.random.default_rng((seed, restart))
        init = _plusplus_init(X, k, rng)
        centers, labels, inertia, iterations, history = _lloyd(
            X, init, max_iter, tol
        )
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia, iterations, history)

    centers, labels, inertia, iterations, history = best
    model = ClusterModel(
        k=k,
        centers=centers,
        feature_schema=list(matrix.schema),
        seed=seed,
        inertia=inertia,
        iterations_run=iterations,
        inertia_history=history,
    )
    assignment = {eid: int(c) for eid, c in zip(matrix.ids, labels)}
    return model, assignment


def assign(model: ClusterModel, matrix: FeatureMatrix) -> dict:
    """Nearest-center assignment; ties broken by lowest cluster index."""
    if list(matrix.schema) != list(model.feature_schema):
        raise KMeansError(
            f"schema mismatch: model {model.feature_schema} vs "
            f"matrix {matrix.schema}"
        )
    if not np.all(np.isfinite(matrix.X)):
        raise KMeansError("feature matrix contains non-finite values")
    d2 = _squared_distances(matrix.X, model.centers)
    labels = np.argmin(d2, axis=1)
    return {eid: int(c) for eid, c in zip(matrix.ids, labels)}
