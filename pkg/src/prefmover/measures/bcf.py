"""BCF / HUSM style measures: every rated item of one user against every rated
item of the other, weighted by item similarity and a rating kernel."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import ItemMetric, SparseRatings
from .classic import SIMILARITY, MeasureResult, _uncomputable

MAX_LEVELS = 64


@dataclass(frozen=True)
class KernelContext:
    scale: tuple


@dataclass(frozen=True)
class RatingKernel:
    """Rating agreement ``eval(r1, r2, context) -> [0, 1]``, vectorized over arrays."""

    name: str
    eval: Callable


def _agreement(r1, r2, ctx):
    lo, hi = ctx.scale
    return 1.0 - np.abs(np.asarray(r1) - np.asarray(r2)) / (hi - lo)


def _husm(r1, r2, ctx):
    return 2.0 / (1.0 + np.exp(np.abs(np.asarray(r1) - np.asarray(r2))))


AGREEMENT = RatingKernel("agreement", _agreement)
HUSM = RatingKernel("husm", _husm)


def item_similarity(item_sim, rows, cols) -> np.ndarray:
    """Similarity block from an :class:`ItemMetric` or a square table."""
    if isinstance(item_sim, ItemMetric):
        return item_sim.similarity(rows, cols)
    return np.asarray(item_sim, dtype=np.float64)[np.ix_(rows, cols)]


def bcf_family_sim(u, v, ratings: SparseRatings, item_sim, kernel: RatingKernel = AGREEMENT,
                   normalized: bool = False) -> MeasureResult:
    iu, ru = ratings.user_items(u), ratings.user_ratings(u)
    iv, rv = ratings.user_items(v), ratings.user_ratings(v)
    if len(iu) == 0 or len(iv) == 0:
        return _uncomputable()
    k = kernel.eval(ru[:, None], rv[None, :], KernelContext(ratings.scale))
    total = float(np.sum(k * item_similarity(item_sim, iu, iv)))
    if normalized:
        total /= len(iu) * len(iv)
    return MeasureResult(total, SIMILARITY)


class BCFRows:
    """All-users rows of the BCF sum for one target user.

    Ratings take few distinct values, so the kernel-weighted similarity
    ``G[l, j] = sum_i k(r_ui, level_l) sim(i, j)`` is built once per target
    and each other user's score is a gather over their entries.
    """

    def __init__(self, ratings: SparseRatings, item_sim, kernel: RatingKernel = AGREEMENT):
        self.ratings = ratings
        self.item_sim = item_sim
        self.kernel = kernel
        self.ctx = KernelContext(ratings.scale)
        csr = ratings.csr
        self.owner = np.repeat(np.arange(ratings.num_users), np.diff(csr.indptr))
        self.levels = np.unique(csr.data)
        self.fast = len(self.levels) <= MAX_LEVELS
        if self.fast:
            self.level_of = np.searchsorted(self.levels, csr.data)
        self.counts = np.diff(csr.indptr).astype(np.float64)

    def raw(self, u) -> np.ndarray:
        r = self.ratings
        iu, ru = r.user_items(u), r.user_ratings(u)
        out = np.zeros(r.num_users)
        if len(iu) == 0:
            return out
        S = item_similarity(self.item_sim, iu, np.arange(r.num_items))
        csr = r.csr
        if self.fast:
            G = self.kernel.eval(self.levels[:, None], ru[None, :], self.ctx) @ S
            vals = G[self.level_of, csr.indices]
        else:
            vals = np.empty(len(csr.data))
            for q in range(len(csr.data)):
                vals[q] = self.kernel.eval(ru, csr.data[q], self.ctx) @ S[:, csr.indices[q]]
        return np.bincount(self.owner, weights=vals, minlength=r.num_users)

    def rows(self, u) -> dict:
        """``{"raw": (values, computable), "normalized": (...)}``."""
        raw = self.raw(u)
        ok = (self.counts > 0) & (self.counts[u] > 0)
        norm = np.where(ok, raw / np.where(ok, self.counts * max(self.counts[u], 1.0), 1.0),
                        np.nan)
        return {"raw": (np.where(ok, raw, np.nan), ok), "normalized": (norm, ok.copy())}
