"""Co-rating based similarity measures (COS, PCC, MSD, Jaccard, URP, JMSD, NHSM).

Two routes compute the same numbers: the ``*_sim`` functions evaluate one
pair straight from the definitions, and :func:`classic_rows` fills a whole
row of pair scores for a target user from co-rating statistics accumulated
over the item columns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..core import SparseRatings

SIMILARITY = "similarity"
DISTANCE = "distance"
VAR_TOL = 1e-12


@dataclass(frozen=True)
class MeasureResult:
    """A pair score. ``value`` is meaningless when ``computable`` is false."""

    value: float
    kind: str
    computable: bool = True

    def __post_init__(self):
        if self.kind not in (SIMILARITY, DISTANCE):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.computable and self.kind == DISTANCE and self.value < 0:
            raise ValueError("distances are nonnegative")

    def as_similarity(self) -> float:
        """``1 - value`` for distances, the value itself otherwise (NaN if uncomputable)."""
        if not self.computable:
            return math.nan
        return 1.0 - self.value if self.kind == DISTANCE else self.value


def _uncomputable(kind=SIMILARITY):
    return MeasureResult(math.nan, kind, False)


def _corated(u, v, ratings):
    iu, iv = ratings.user_items(u), ratings.user_items(v)
    common, a, b = np.intersect1d(iu, iv, assume_unique=True, return_indices=True)
    return common, ratings.user_ratings(u)[a], ratings.user_ratings(v)[b]


def cos_sim(u, v, ratings: SparseRatings) -> MeasureResult:
    _, ru, rv = _corated(u, v, ratings)
    if len(ru) == 0:
        return _uncomputable()
    den = np.linalg.norm(ru) * np.linalg.norm(rv)
    if den == 0:
        return _uncomputable()
    return MeasureResult(float(ru @ rv / den), SIMILARITY)


def pcc_sim(u, v, ratings: SparseRatings) -> MeasureResult:
    _, ru, rv = _corated(u, v, ratings)
    if len(ru) == 0:
        return _uncomputable()
    du, dv = ru - ru.mean(), rv - rv.mean()
    su, sv = du @ du, dv @ dv
    if su <= VAR_TOL or sv <= VAR_TOL:
        return _uncomputable()
    return MeasureResult(float(du @ dv / math.sqrt(su * sv)), SIMILARITY)


def _scaled(r, scale):
    lo, hi = scale
    return (r - lo) / (hi - lo)


def msd_dist(u, v, ratings: SparseRatings) -> MeasureResult:
    _, ru, rv = _corated(u, v, ratings)
    if len(ru) == 0:
        return _uncomputable(DISTANCE)
    diff = _scaled(ru, ratings.scale) - _scaled(rv, ratings.scale)
    return MeasureResult(float(np.mean(diff ** 2)), DISTANCE)


def jaccard_sim(u, v, ratings: SparseRatings) -> MeasureResult:
    iu, iv = ratings.user_items(u), ratings.user_items(v)
    union = len(np.union1d(iu, iv))
    if union == 0:
        return _uncomputable()
    return MeasureResult(len(np.intersect1d(iu, iv)) / union, SIMILARITY)


def _urp(mu_u, sd_u, mu_v, sd_v):
    return 1.0 - 1.0 / (1.0 + math.exp(-abs(mu_u - mu_v) * abs(sd_u - sd_v)))


def urp_sim(u, v, ratings: SparseRatings) -> MeasureResult:
    ru, rv = ratings.user_ratings(u), ratings.user_ratings(v)
    if len(ru) == 0 or len(rv) == 0:
        return _uncomputable()
    return MeasureResult(_urp(ru.mean(), ru.std(), rv.mean(), rv.std()), SIMILARITY)


def jmsd_sim(u, v, ratings: SparseRatings) -> MeasureResult:
    msd = msd_dist(u, v, ratings)
    if not msd.computable:
        return _uncomputable()
    return MeasureResult(jaccard_sim(u, v, ratings).value * (1.0 - msd.value), SIMILARITY)


def pss(r1, r2, item_mean, scale):
    """Proximity x significance x singularity of two ratings on one item."""
    median = 0.5 * (scale[0] + scale[1])
    proximity = 1.0 - 1.0 / (1.0 + np.exp(-np.abs(r1 - r2)))
    significance = 1.0 / (1.0 + np.exp(-np.abs(r1 - median) * np.abs(r2 - median)))
    singularity = 1.0 - 1.0 / (1.0 + np.exp(-np.abs(0.5 * (r1 + r2) - item_mean)))
    return proximity * significance * singularity


def item_means(ratings: SparseRatings) -> np.ndarray:
    counts = np.diff(ratings.csc.indptr)
    sums = np.asarray(ratings.csc.sum(axis=0)).ravel()
    return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def nhsm_sim(u, v, ratings: SparseRatings) -> MeasureResult:
    common, ru, rv = _corated(u, v, ratings)
    if len(common) == 0:
        return _uncomputable()
    mu = item_means(ratings)[common]
    n_u, n_v = ratings.count(u), ratings.count(v)
    jpss = float(np.sum(pss(ru, rv, mu, ratings.scale))) * len(common) / (n_u * n_v)
    return MeasureResult(jpss * urp_sim(u, v, ratings).value, SIMILARITY)


# --- bulk route -----------------------------------------------------------

N_STATS = 7  # count, su, sv, suu, svv, suv, sum pss


@njit(cache=True)
def _corated_stats(u, indptr, indices, data, cindptr, cindices, cdata, imean, median, out):
    out[:, :] = 0.0
    for q in range(indptr[u], indptr[u + 1]):
        i = indices[q]
        a = data[q]
        mu = imean[i]
        for t in range(cindptr[i], cindptr[i + 1]):
            v = cindices[t]
            b = cdata[t]
            out[v, 0] += 1.0
            out[v, 1] += a
            out[v, 2] += b
            out[v, 3] += a * a
            out[v, 4] += b * b
            out[v, 5] += a * b
            prox = 1.0 - 1.0 / (1.0 + np.exp(-abs(a - b)))
            sig = 1.0 / (1.0 + np.exp(-abs(a - median) * abs(b - median)))
            sing = 1.0 - 1.0 / (1.0 + np.exp(-abs(0.5 * (a + b) - mu)))
            out[v, 6] += prox * sig * sing


class UserStats:
    """Per-user and per-item aggregates reused by every bulk row."""

    def __init__(self, ratings: SparseRatings):
        self.ratings = ratings
        csr = ratings.csr
        self.counts = np.diff(csr.indptr).astype(np.float64)
        self.means = np.nan_to_num(ratings.user_means)
        sq = np.asarray(csr.multiply(csr).sum(axis=1)).ravel()
        with np.errstate(invalid="ignore", divide="ignore"):
            var = np.where(self.counts > 0, sq / np.maximum(self.counts, 1) - self.means ** 2, 0.0)
        self.stds = np.sqrt(np.maximum(var, 0.0))
        self.item_means = np.nan_to_num(item_means(ratings))
        self.median = 0.5 * (ratings.scale[0] + ratings.scale[1])
        self._buf = np.zeros((ratings.num_users, N_STATS))

    def corated(self, u):
        r = self.ratings
        _corated_stats(u, r.csr.indptr, r.csr.indices, r.csr.data, r.csc.indptr,
                       r.csc.indices, r.csc.data, self.item_means, self.median, self._buf)
        return self._buf


def classic_rows(stats: UserStats, u: int) -> dict:
    """Scores of ``u`` against every user for all co-rating measures.

    Returns ``{name: (values, computable)}``; MSD is reported as a distance.
    """
    s = stats.corated(u)
    n, su, sv, suu, svv, suv, spss = (s[:, k] for k in range(N_STATS))
    has = n > 0
    safe_n = np.where(has, n, 1.0)
    lo, hi = stats.ratings.scale
    width = hi - lo
    out = {}
    with np.errstate(invalid="ignore", divide="ignore"):
        den = np.sqrt(suu * svv)
        cos_ok = has & (den > 0)
        out["cos"] = (np.where(cos_ok, suv / np.where(den > 0, den, 1.0), np.nan), cos_ok)

        cov = suv - su * sv / safe_n
        var_u = suu - su * su / safe_n
        var_v = svv - sv * sv / safe_n
        pcc_ok = has & (var_u > VAR_TOL) & (var_v > VAR_TOL)
        pcc = cov / np.sqrt(np.where(pcc_ok, var_u * var_v, 1.0))
        out["pcc"] = (np.where(pcc_ok, np.clip(pcc, -1.0, 1.0), np.nan), pcc_ok)

        # mean of ((a - lo) - (b - lo))^2 / width^2
        msd = np.maximum(suu - 2 * suv + svv, 0.0) / safe_n / width ** 2
        out["msd"] = (np.where(has, msd, np.nan), has.copy())

        cnt_u = stats.counts[u]
        union = cnt_u + stats.counts - n
        jac = np.where(union > 0, n / np.where(union > 0, union, 1.0), 0.0)
        out["jaccard"] = (jac, union > 0)

        both = (stats.counts > 0) & (cnt_u > 0)
        urp = 1.0 - 1.0 / (1.0 + np.exp(-np.abs(stats.means[u] - stats.means)
                                         * np.abs(stats.stds[u] - stats.stds)))
        out["urp"] = (np.where(both, urp, np.nan), both)

        out["jmsd"] = (np.where(has, jac * (1.0 - msd), np.nan), has.copy())

        jpss = spss * n / np.where(both, cnt_u * stats.counts, 1.0)
        out["nhsm"] = (np.where(has, jpss * urp, np.nan), has.copy())
    return out
