"""Shared data model: sparse ratings, preference distributions, item metrics, couplings."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateUser,
    DegenerateVector,
    InvalidSimilarity,
    NotFound,
)

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
TRIANGLE_TOL = 1e-9
TRIANGLE_SAMPLES = 10_000
# neighbor scores equal to this many decimals count as tied; ties go to the lower id
TIE_DECIMALS = 12


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


class SparseRatings:
    """Immutable user x item rating matrix.

    Users and items are dense integer indices. ``user_labels`` / ``item_labels``
    keep the raw identifiers (ids from the source file, or names in toy data).
    Rated items of each user are kept in ascending item order.
    """

    def __init__(self, users, items, ratings, num_users=None, num_items=None,
                 scale=(1.0, 5.0), user_labels=None, item_labels=None):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        ratings = np.asarray(ratings, dtype=np.float64)
        if not (users.shape == items.shape == ratings.shape):
            raise ValueError("users, items and ratings must have equal length")
        r_min, r_max = float(scale[0]), float(scale[1])
        if r_min < 0 or r_max < r_min:
            raise ValueError(f"invalid rating scale {scale}")
        if ratings.size:
            lo, hi = ratings.min(), ratings.max()
            if lo < r_min or hi > r_max or not np.all(np.isfinite(ratings)):
                raise ValueError(f"ratings outside scale [{r_min}, {r_max}]")
        if num_users is None:
            num_users = int(users.max()) + 1 if users.size else 0
        if num_items is None:
            num_items = int(items.max()) + 1 if items.size else 0
        if users.size and (users.min() < 0 or users.max() >= num_users):
            raise ValueError("user index out of range")
        if items.size and (items.min() < 0 or items.max() >= num_items):
            raise ValueError("item index out of range")

        # duplicates: the last occurrence wins
        key = users * max(num_items, 1) + items
        _, last = np.unique(key[::-1], return_index=True)
        keep = np.sort(len(key) - 1 - last)
        if len(keep) != len(key):
            log.warning("dropped %d duplicate (user, item) entries", len(key) - len(keep))
            users, items, ratings = users[keep], items[keep], ratings[keep]

        csr = sp.csr_matrix((ratings, (users, items)), shape=(num_users, num_items))
        csr.sort_indices()
        csc = csr.tocsc()
        csc.sort_indices()
        self._csr = csr
        self._csc = csc
        for a in (csr.data, csr.indices, csr.indptr, csc.data, csc.indices, csc.indptr):
            a.setflags(write=False)
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.scale = (r_min, r_max)
        self.user_labels = None if user_labels is None else list(user_labels)
        self.item_labels = None if item_labels is None else list(item_labels)
        counts = np.diff(csr.indptr)
        sums = np.asarray(csr.sum(axis=1)).ravel()
        with np.errstate(invalid="ignore", divide="ignore"):
            self._means = _frozen(np.where(counts > 0, sums / np.maximum(counts, 1), np.nan))
        self._counts = _frozen(counts)

    @classmethod
    def from_triples(cls, triples, **kwargs):
        triples = list(triples)
        if not triples:
            return cls([], [], [], num_users=kwargs.pop("num_users", 0),
                       num_items=kwargs.pop("num_items", 0), **kwargs)
        u, i, r = zip(*triples)
        return cls(u, i, r, **kwargs)

    def __repr__(self):
        return (f"SparseRatings(users={self.num_users}, items={self.num_items}, "
                f"entries={self.num_entries}, scale={self.scale})")

    @property
    def num_entries(self):
        return int(self._csr.nnz)

    @property
    def csr(self):
        return self._csr

    @property
    def csc(self):
        return self._csc

    def _check_user(self, u):
        if not 0 <= u < self.num_users:
            raise NotFound(f"unknown user {u}")

    def _check_item(self, i):
        if not 0 <= i < self.num_items:
            raise NotFound(f"unknown item {i}")

    def user_items(self, u) -> np.ndarray:
        self._check_user(u)
        p = self._csr.indptr
        return self._csr.indices[p[u]:p[u + 1]]

    def user_ratings(self, u) -> np.ndarray:
        self._check_user(u)
        p = self._csr.indptr
        return self._csr.data[p[u]:p[u + 1]]

    def raters(self, i) -> np.ndarray:
        self._check_item(i)
        p = self._csc.indptr
        return self._csc.indices[p[i]:p[i + 1]]

    def item_ratings(self, i) -> np.ndarray:
        self._check_item(i)
        p = self._csc.indptr
        return self._csc.data[p[i]:p[i + 1]]

    def rating(self, u, i) -> Optional[float]:
        items = self.user_items(u)
        k = np.searchsorted(items, i)
        if k < len(items) and items[k] == i:
            return float(self.user_ratings(u)[k])
        return None

    def count(self, u) -> int:
        self._check_user(u)
        return int(self._counts[u])

    def user_mean(self, u) -> float:
        """Mean rating of ``u``; NaN when the user has no ratings."""
        self._check_user(u)
        return float(self._means[u])

    @property
    def user_means(self) -> np.ndarray:
        return self._means

    @property
    def user_counts(self) -> np.ndarray:
        return self._counts

    def global_mean(self) -> float:
        if self.num_entries == 0:
            return 0.5 * (self.scale[0] + self.scale[1])
        return float(self._csr.data.mean())

    def entries(self):
        """Return ``(users, items, ratings)`` arrays in row-major order."""
        coo = self._csr.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def subset(self, mask) -> "SparseRatings":
        """A new matrix holding the entries selected by ``mask`` (aligned with :meth:`entries`)."""
        u, i, r = self.entries()
        mask = np.asarray(mask, dtype=bool)
        return SparseRatings(u[mask], i[mask], r[mask], num_users=self.num_users,
                             num_items=self.num_items, scale=self.scale,
                             user_labels=self.user_labels, item_labels=self.item_labels)

    def user_index(self, label) -> int:
        """Dense index of a user given its raw label (or the index itself)."""
        if self.user_labels is not None:
            for k, lab in enumerate(self.user_labels):
                if str(lab) == str(label):
                    return k
        try:
            k = int(label)
        except (TypeError, ValueError):
            raise NotFound(f"unknown user {label!r}") from None
        self._check_user(k)
        return k

    def user_name(self, u) -> str:
        return str(self.user_labels[u]) if self.user_labels is not None else str(u)

    def item_name(self, i) -> str:
        return str(self.item_labels[i]) if self.item_labels is not None else str(i)


@dataclass(frozen=True)
class Preference:
    """A probability distribution over the items a user rated."""

    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        mass = np.asarray(self.mass, dtype=np.float64)
        if support.ndim != 1 or support.shape != mass.shape:
            raise ValueError("support and mass must be parallel 1-d arrays")
        if len(support) == 0:
            raise DegenerateUser("preference needs at least one item")
        if len(np.unique(support)) != len(support):
            raise ValueError("duplicate items in preference support")
        if np.any(mass < 0) or np.any(mass > 1):
            raise ValueError("preference masses must lie in [0, 1]")
        if abs(mass.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"preference masses sum to {mass.sum()!r}, not 1")
        object.__setattr__(self, "support", _frozen(support))
        object.__setattr__(self, "mass", _frozen(mass))

    def __len__(self):
        return len(self.support)

    def truncated(self, top: int) -> "Preference":
        """Keep the ``top`` largest masses (ties by item id) and renormalize."""
        if top >= len(self):
            return self
        order = np.lexsort((self.support, -self.mass))[:top]
        order.sort()
        mass = self.mass[order]
        return Preference(self.support[order], mass / mass.sum())


def build_preference(ratings: SparseRatings, user: int) -> Preference:
    """Normalize a user's ratings into a distribution over their rated items."""
    items = ratings.user_items(user)
    values = ratings.user_ratings(user)
    total = values.sum()
    if len(items) == 0 or not total > 0:
        raise DegenerateUser(f"user {user} has no positive rating mass")
    mass = values / total
    # a single pass of renormalization keeps the sum within 1 ulp-ish of 1
    mass = mass / mass.sum()
    return Preference(items.copy(), mass)


class ItemMetric:
    """Ground distances between items.

    Subclasses provide :meth:`submatrix`; everything else is derived from it.
    """

    n_items: int
    d_max: float
    is_metric: bool
    mode: Optional[str] = None

    def submatrix(self, rows, cols) -> np.ndarray:
        raise NotImplementedError

    def distance(self, i, j) -> float:
        return float(self.submatrix(np.array([i]), np.array([j]))[0, 0])

    def paired(self, i, j) -> np.ndarray:
        """Elementwise distances ``d(i[k], j[k])``."""
        return np.array([self.distance(a, b) for a, b in zip(i, j)], dtype=np.float64)

    def rows(self, rows) -> np.ndarray:
        """Distances from ``rows`` to every item, shape (len(rows), n_items)."""
        return self.submatrix(rows, np.arange(self.n_items))

    def dense(self) -> np.ndarray:
        idx = np.arange(self.n_items)
        return self.submatrix(idx, idx)

    @property
    def missing(self) -> np.ndarray:
        return np.zeros(self.n_items, bool)

    def similarity(self, rows, cols) -> np.ndarray:
        """Item similarities implied by the distances.

        ``cos(d)`` in arccos mode, ``1 - d`` otherwise. Items without a
        feature vector are unrelated (0) to everything but themselves.
        """
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        d = self.submatrix(rows, cols)
        s = np.cos(d) if self.mode == "arccos" else 1.0 - d
        miss = self.missing
        if miss.any():
            off = (miss[rows][:, None] | miss[cols][None, :]) & (rows[:, None] != cols[None, :])
            s[off] = 0.0
        return s


class DenseItemMetric(ItemMetric):
    """Materialized square distance table."""

    def __init__(self, matrix, d_max=None, is_metric=None, labels=None, mode=None,
                 missing=None):
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("distance table must be square")
        if np.any(~np.isfinite(matrix)) or np.any(matrix < 0):
            raise ValueError("distances must be finite and nonnegative")
        if not np.allclose(matrix, matrix.T, atol=1e-12, rtol=0):
            raise ValueError("distance table must be symmetric")
        np.fill_diagonal(matrix, 0.0)
        self._d = _frozen(matrix)
        self.n_items = matrix.shape[0]
        self.d_max = float(matrix.max() if d_max is None else d_max)
        if matrix.size and matrix.max() > self.d_max + 1e-12:
            raise ValueError("distance exceeds declared d_max")
        self.labels = labels
        self.mode = mode
        self._missing = _frozen(np.zeros(self.n_items, bool) if missing is None
                                else np.asarray(missing, bool))
        self.is_metric = (check_triangle(self) <= TRIANGLE_TOL
                          if is_metric is None else bool(is_metric))

    @property
    def missing(self):
        return self._missing

    def submatrix(self, rows, cols):
        return self._d[np.ix_(np.asarray(rows), np.asarray(cols))]

    def rows(self, rows):
        return self._d[np.asarray(rows)]

    def dense(self):
        return self._d

    def distance(self, i, j):
        return float(self._d[i, j])

    def paired(self, i, j):
        return self._d[np.asarray(i), np.asarray(j)]


class VectorItemMetric(ItemMetric):
    """Distances computed on demand from item feature vectors.

    ``mode`` is ``"arccos"`` (angle between vectors) or ``"one-minus"``
    (``1 - cosine``). Items whose vector is missing sit at ``d_max`` from every
    other item.
    """

    def __init__(self, vectors, mode="arccos", missing=None):
        vectors = np.asarray(vectors, dtype=np.float64)
        if mode not in ("arccos", "one-minus"):
            raise ValueError(f"unknown mode {mode!r}")
        norms = np.linalg.norm(vectors, axis=1)
        missing = np.zeros(len(vectors), bool) if missing is None else np.asarray(missing, bool)
        missing = missing | (norms == 0)
        unit = np.zeros_like(vectors)
        ok = ~missing
        unit[ok] = vectors[ok] / norms[ok, None]
        self._unit = _frozen(unit)
        self._missing = _frozen(missing)
        self.mode = mode
        self.n_items = len(vectors)
        nonneg = bool(np.all(vectors >= 0))
        if mode == "arccos":
            self.d_max = np.pi
        else:
            self.d_max = 1.0 if nonneg else 2.0
        # angular distance between vectors is a metric; 1 - cos is not in general
        self.is_metric = mode == "arccos"

    @property
    def missing(self):
        return self._missing

    def submatrix(self, rows, cols):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        sim = np.clip(self._unit[rows] @ self._unit[cols].T, -1.0, 1.0)
        d = np.arccos(sim) if self.mode == "arccos" else 1.0 - sim
        d = np.maximum(d, 0.0)
        miss = self._missing[rows][:, None] | self._missing[cols][None, :]
        d[miss] = self.d_max
        d[rows[:, None] == cols[None, :]] = 0.0
        return d

    def paired(self, i, j):
        i = np.asarray(i)
        j = np.asarray(j)
        sim = np.clip(np.einsum("kf,kf->k", self._unit[i], self._unit[j]), -1.0, 1.0)
        d = np.arccos(sim) if self.mode == "arccos" else 1.0 - sim
        d = np.maximum(d, 0.0)
        d[self._missing[i] | self._missing[j]] = self.d_max
        d[i == j] = 0.0
        return d

    def materialize(self) -> DenseItemMetric:
        return DenseItemMetric(self.dense(), d_max=self.d_max, is_metric=self.is_metric,
                               mode=self.mode, missing=self._missing)


def check_triangle(metric: ItemMetric, samples=TRIANGLE_SAMPLES, rng=None) -> float:
    """Largest triangle-inequality violation ``d(i,k) - d(i,j) - d(j,k)`` found.

    Every triple is checked when ``n**3 <= samples``; otherwise ``samples``
    random triples are drawn.
    """
    n = metric.n_items
    if n < 3:
        return 0.0
    if n ** 3 <= samples:
        D = metric.dense()
        viol = D[:, None, :] - D[:, :, None] - D[None, :, :]
        return float(max(viol.max(), 0.0))
    rng = np.random.default_rng(0) if rng is None else rng
    i, j, k = rng.integers(0, n, size=(3, samples))
    viol = metric.paired(i, k) - metric.paired(i, j) - metric.paired(j, k)
    return float(max(viol.max(), 0.0))


def item_metric_from_similarity(sim, mode="arccos", labels=None) -> DenseItemMetric:
    """Turn a symmetric item-similarity table into ground distances.

    ``arccos`` maps cosine similarities to angles (``d_max = pi``);
    ``one-minus`` uses ``1 - sim``. The metric flag is set by checking the
    triangle inequality on the resulting table.
    """
    sim = np.asarray(sim, dtype=np.float64)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise InvalidSimilarity("similarity table must be square")
    if np.any(~np.isfinite(sim)) or sim.min(initial=0) < -1 - 1e-12 or sim.max(initial=0) > 1 + 1e-12:
        raise InvalidSimilarity("similarities must lie in [-1, 1]")
    if not np.allclose(sim, sim.T, atol=1e-12, rtol=0):
        raise InvalidSimilarity("similarity table is not symmetric")
    if not np.allclose(np.diag(sim), 1.0, atol=1e-12):
        raise InvalidSimilarity("self-similarity must be 1")
    sim = np.clip(sim, -1.0, 1.0)
    if mode == "arccos":
        d = np.arccos(sim)
        d_max = np.pi
    elif mode == "one-minus":
        d = 1.0 - sim
        d_max = max(1.0, float(d.max(initial=0)))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    d = 0.5 * (d + d.T)
    return DenseItemMetric(d, d_max=d_max, labels=labels, mode=mode)


def cosine_of_vectors(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("vectors must have the same dimension")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateVector("cosine is undefined for a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class Coupling:
    """A transport plan between two supports."""

    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.rows), len(self.cols)):
            raise ValueError("coupling shape does not match its supports")
        if np.any(w < 0) or np.any(w > 1 + 1e-12):
            raise ValueError("coupling weights must lie in [0, 1]")
        object.__setattr__(self, "rows", _frozen(np.asarray(self.rows, dtype=np.int64)))
        object.__setattr__(self, "cols", _frozen(np.asarray(self.cols, dtype=np.int64)))
        object.__setattr__(self, "weights", _frozen(w))

    def marginal_error(self, row_mass: Sequence[float], col_mass: Sequence[float]) -> float:
        """Max absolute deviation of the row/column sums from the given marginals."""
        r = np.abs(self.weights.sum(axis=1) - np.asarray(row_mass)).max(initial=0)
        c = np.abs(self.weights.sum(axis=0) - np.asarray(col_mass)).max(initial=0)
        return float(max(r, c))

    def flows(self, min_mass=0.0):
        """Yield ``(row_item, col_item, mass)`` for entries above ``min_mass``."""
        for a, b in zip(*np.nonzero(self.weights > min_mass)):
            yield int(self.rows[a]), int(self.cols[b]), float(self.weights[a, b])
