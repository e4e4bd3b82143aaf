"""K-nearest-neighbor selection and mean-centered rating prediction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import TIE_DECIMALS, ItemMetric, SparseRatings
from .errors import InvalidDistance
from .measures.catalog import lookup
from .measures.classic import DISTANCE

FALLBACKS = ("none", "user-mean", "global-mean")


def distance_to_weight(d, d_max):
    """Linear map ``1 - d / d_max`` from [0, d_max] onto [0, 1]."""
    if not d_max > 0:
        raise InvalidDistance(f"d_max must be positive, got {d_max}")
    d = np.asarray(d, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d < 0) or np.any(d > d_max):
        raise InvalidDistance(f"distance outside [0, {d_max}]")
    w = 1.0 - d / d_max
    return float(w) if w.ndim == 0 else w


def similarity_to_weight(s):
    """Similarities are used as weights directly; negative ones count as 0."""
    return np.maximum(np.asarray(s, dtype=np.float64), 0.0)


@dataclass(frozen=True)
class NeighborList:
    target: int
    users: np.ndarray
    weights: np.ndarray
    k: int

    def __post_init__(self):
        users = np.asarray(self.users, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if users.shape != weights.shape or len(users) > self.k:
            raise ValueError("neighbor list longer than K or misaligned")
        if np.any(weights <= 0):
            raise ValueError("neighbor weights must be positive")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.users)

    @property
    def entries(self):
        return list(zip(self.users.tolist(), self.weights.tolist()))

    def head(self, k) -> "NeighborList":
        return NeighborList(self.target, self.users[:k], self.weights[:k], k)


def rank_neighbors(target, candidates, weights, k) -> NeighborList:
    """Top ``k`` by weight to ``TIE_DECIMALS`` places (ties by user id).

    Weights <= 0 and NaN are dropped.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    ok = (weights > 0) & (candidates != target)
    candidates, weights = candidates[ok], weights[ok]
    order = np.lexsort((candidates, -np.round(weights, TIE_DECIMALS)))[:k]
    return NeighborList(target, candidates[order], weights[order], k)


@dataclass(frozen=True)
class Context:
    """What a measure may need besides the ratings."""

    ratings: SparseRatings
    metric: Optional[ItemMetric] = None
    solver: str = "exact"


def weight_of(measure, result, metric=None):
    if not result.computable:
        return 0.0
    if measure.kind == DISTANCE:
        d_max = metric.d_max if measure.name == "pmd" else 1.0
        return distance_to_weight(min(result.value, d_max), d_max)
    return float(similarity_to_weight(result.value))


def top_k_neighbors(target, item, k, measure, context: Context) -> NeighborList:
    """Raters of ``item`` ranked by their weight towards ``target``.

    Evaluates the measure pair by pair; the evaluation harness uses bulk
    scorers that produce the same lists.
    """
    if k < 1:
        raise ValueError("K must be at least 1")
    m = lookup(measure) if isinstance(measure, str) else measure
    raters = context.ratings.raters(item)
    raters = raters[raters != target]
    options = {"solver": context.solver} if m.name == "pmd" else {}
    weights = np.array([weight_of(m, m(target, v, context.ratings, context.metric, **options),
                                  context.metric) for v in raters])
    return rank_neighbors(target, raters, weights, k)


@dataclass(frozen=True)
class Prediction:
    user: int
    item: int
    value: float
    fallback: str = "none"


def _clamp(x, scale):
    return float(min(max(x, scale[0]), scale[1]))


def predict(target, item, neighbors: NeighborList, ratings: SparseRatings) -> Prediction:
    """``mean_u + sum w (r_vi - mean_v) / sum |w|`` clamped to the rating scale."""
    if target >= ratings.num_users or ratings.count(target) == 0:
        return Prediction(target, item, _clamp(ratings.global_mean(), ratings.scale),
                          "global-mean")
    mean_u = ratings.user_mean(target)
    if len(neighbors) == 0:
        return Prediction(target, item, _clamp(mean_u, ratings.scale), "user-mean")
    dev = np.array([ratings.rating(v, item) - ratings.user_mean(v) for v in neighbors.users])
    w = neighbors.weights
    value = mean_u + float(w @ dev) / float(np.abs(w).sum())
    return Prediction(target, item, _clamp(value, ratings.scale))
