"""Lloyd K-means over the normalized user matrix, with random restarts."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import TooFewUsers
from .features import FeatureMatrix

# relative slack for the per-iteration monotonicity assertion (float summation noise)
MONOTONE_RTOL = 1e-9


@dataclass(frozen=True)
class KmeansConfig:
    k: int = 4
    epsilon: float = 1e-6
    max_iter: int = 300
    seed: int = 0
    restarts: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, 5), normalized feature space
    user_ids: tuple[str, ...]
    assignments: np.ndarray  # 0-based group index per user
    cost: float
    iterations: int
    shift: np.ndarray
    scale: np.ndarray
    config: KmeansConfig = field(default_factory=KmeansConfig)
    cost_trace: tuple[float, ...] = ()

    @property
    def raw_centroids(self) -> np.ndarray:
        return self.centroids * self.scale + self.shift

    def labels(self) -> dict[str, int]:
        return {u: int(c) for u, c in zip(self.user_ids, self.assignments)}

    def predict(self, fm: FeatureMatrix) -> np.ndarray:
        """Nearest-centroid groups for users of ``fm`` using this model's scaling."""
        return assign_all((fm.raw - self.shift) / self.scale, self.centroids)

    def to_json(self) -> str:
        doc = {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "centroids_raw": self.raw_centroids.tolist(),
            "assignments": {u: int(c) for u, c in zip(self.user_ids, self.assignments)},
            "user_order": list(self.user_ids),
            "cost": self.cost,
            "iterations": self.iterations,
            "cost_trace": list(self.cost_trace),
            "normalization": {"shift": self.shift.tolist(), "scale": self.scale.tolist()},
            "config": asdict(self.config),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        doc = json.loads(text)
        users = tuple(doc["user_order"])
        return cls(
            k=int(doc["k"]),
            centroids=np.array(doc["centroids"], dtype=float),
            user_ids=users,
            assignments=np.array([doc["assignments"][u] for u in users], dtype=int),
            cost=float(doc["cost"]),
            iterations=int(doc["iterations"]),
            shift=np.array(doc["normalization"]["shift"], dtype=float),
            scale=np.array(doc["normalization"]["scale"], dtype=float),
            config=KmeansConfig(**doc["config"]),
            cost_trace=tuple(doc.get("cost_trace", ())),
        )


def _sq_dists(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def assign(x, centroids) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    return int(assign_all(np.asarray(x, float)[None, :], centroids)[0])


def assign_all(X, centroids) -> np.ndarray:
    # np.argmin returns the first minimum, which is the lowest-index tie rule
    return np.argmin(_sq_dists(np.asarray(X, float), np.asarray(centroids, float)), axis=1)


def update_centroids(X, assignments, k: int, previous=None) -> np.ndarray:
    """Member means per group.

    An empty group is re-seeded onto the point farthest from the updated
    centroid of the group it belongs to. The point keeps its assignment; the
    next assign step moves it. ``previous`` only supplies the array shape.
    """
    X = np.asarray(X, float)
    assignments = np.asarray(assignments)
    centroids = np.zeros((k, X.shape[1])) if previous is None else np.array(previous, dtype=float)
    empty = []
    for j in range(k):
        members = assignments == j
        if members.any():
            centroids[j] = X[members].mean(axis=0)
        else:
            empty.append(j)
    if empty:
        dist = np.sum((X - centroids[assignments]) ** 2, axis=1)
        for j in empty:
            far = int(np.argmax(dist))
            centroids[j] = X[far]
            dist[far] = -1.0
    return centroids


def total_cost(X, centroids, assignments) -> float:
    X = np.asarray(X, float)
    diff = X - np.asarray(centroids, float)[np.asarray(assignments)]
    return float(np.sum(diff * diff))


def _lloyd(X: np.ndarray, init: np.ndarray, cfg: KmeansConfig):
    centroids = init.copy()
    labels = assign_all(X, centroids)
    trace = [total_cost(X, centroids, labels)]
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        centroids = update_centroids(X, labels, cfg.k, previous=centroids)
        cost = total_cost(X, centroids, labels)
        new_labels = assign_all(X, centroids)
        new_cost = total_cost(X, centroids, new_labels)
        if new_cost > cost * (1 + MONOTONE_RTOL) + 1e-12 or cost > trace[-1] * (1 + MONOTONE_RTOL) + 1e-12:
            raise RuntimeError(f"Lloyd cost increased at iteration {iterations}")
        trace.append(cost)
        if np.array_equal(new_labels, labels) or abs(trace[-2] - cost) < cfg.epsilon:
            break
        labels = new_labels
    return centroids, labels, trace, iterations


def fit(X: FeatureMatrix | np.ndarray, cfg: KmeansConfig = KmeansConfig(),
        user_ids=None) -> ClusterModel:
    """Best-of-``restarts`` Lloyd fit; each restart seeds from distinct rows of X."""
    if isinstance(X, FeatureMatrix):
        values, shift, scale, ids = X.values, X.shift, X.scale, X.user_ids
    else:
        values = np.asarray(X, dtype=float)
        shift, scale = np.zeros(values.shape[1]), np.ones(values.shape[1])
        ids = tuple(str(i) for i in range(len(values))) if user_ids is None else tuple(user_ids)
    m = len(values)
    if m < cfg.k:
        raise TooFewUsers(f"{m} users < k={cfg.k}")

    best = None
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
        rng = np.random.default_rng(child)
        init = values[rng.choice(m, size=cfg.k, replace=False)]
        centroids, labels, trace, iters = _lloyd(values, init, cfg)
        if best is None or trace[-1] < best[2][-1]:
            best = (centroids, labels, trace, iters)
    centroids, labels, trace, iters = best
    return ClusterModel(
        k=cfg.k, centroids=centroids, user_ids=ids, assignments=labels,
        cost=total_cost(values, centroids, labels), iterations=iters,
        shift=np.asarray(shift, float), scale=np.asarray(scale, float),
        config=cfg, cost_trace=tuple(trace),
    )


def choose_k(X, k_range, cfg: KmeansConfig = KmeansConfig()) -> list[tuple[int, float]]:
    """Best cost per k, for elbow inspection."""
    ks = list(k_range)
    if not ks:
        raise ValueError("k_range is empty")
    curve = []
    for k in ks:
        model = fit(X, KmeansConfig(k=k, epsilon=cfg.epsilon, max_iter=cfg.max_iter,
                                    seed=cfg.seed, restarts=cfg.restarts))
        curve.append((k, model.cost))
    return curve


def cost_curve_csv(curve) -> str:
    return "k,cost\n" + "".join(f"{k},{c!r}\n" for k, c in curve)
