"""Preference Mover's Distance between users."""

from __future__ import annotations

import heapq
import time

import numpy as np

from ..core import TIE_DECIMALS, DenseItemMetric, ItemMetric, SparseRatings, build_preference
from ..errors import DegenerateUser
from ..transport import TransportProblem, TransportSolution, solve
from ..transport.bounds import relaxed_bounds_csr
from ..transport.exact import solve_exact_cost
from .classic import DISTANCE, MeasureResult

# a lower bound this far above the K-th best distance rules a candidate out
PRUNE_SLACK = 1e-12


def pmd_solution(u, v, ratings: SparseRatings, metric: ItemMetric, solver="exact",
                 epsilon=1e-3) -> tuple[TransportProblem, TransportSolution]:
    p = build_preference(ratings, u)
    q = build_preference(ratings, v)
    problem = TransportProblem.between(p, q, metric)
    return problem, solve(problem, solver, epsilon=epsilon)


def pmd(u, v, ratings: SparseRatings, metric: ItemMetric, solver="exact",
        epsilon=1e-3) -> MeasureResult:
    """Optimal cost of moving ``u``'s preference onto ``v``'s."""
    _, sol = pmd_solution(u, v, ratings, metric, solver, epsilon)
    return MeasureResult(max(sol.optimal_cost, 0.0), DISTANCE)


class PMDScorer:
    """Cached PMD between the users of one rating matrix.

    Pair values are stored symmetrically in ``table`` (NaN = not yet solved)
    and are always solved with the lower user id as supply, so a value does
    not depend on which caller asked first. With a metric ground cost the
    mass two users put on a shared item can stay in place for free, so that
    part is cancelled before solving (``reduce``); the optimum is unchanged.
    ``truncate`` keeps each user's top-T masses (approximate PMD).
    """

    def __init__(self, ratings: SparseRatings, metric: ItemMetric, solver="exact",
                 epsilon=1e-3, truncate=None, reduce=False, table=None):
        if metric.n_items < ratings.num_items:
            raise ValueError("item metric does not cover every rated item")
        self.ratings = ratings
        self.metric = metric
        self.solver = solver
        self.epsilon = epsilon
        self.truncate = truncate
        self.reduce = reduce and metric.is_metric and solver == "exact"
        self.d_max = metric.d_max
        n = ratings.num_users
        self.support = [None] * n
        self.mass = [None] * n
        indptr = np.zeros(n + 1, np.int64)
        for u in range(n):
            try:
                p = build_preference(ratings, u)
            except DegenerateUser:
                indptr[u + 1] = indptr[u]
                continue
            if truncate:
                p = p.truncated(truncate)
            self.support[u], self.mass[u] = p.support, p.mass
            indptr[u + 1] = indptr[u] + len(p)
        self._indptr = indptr
        if indptr[-1]:
            self._indices = np.concatenate([s for s in self.support if s is not None])
            self._data = np.concatenate([m for m in self.mass if m is not None])
        else:
            self._indices = np.zeros(0, np.int64)
            self._data = np.zeros(0)
        self._dense = metric.dense() if isinstance(metric, DenseItemMetric) else None
        if table is None:
            table = np.full((n, n), np.nan)
            np.fill_diagonal(table, 0.0)
        self.table = table
        # pairs asked for, cached or not: what a cold run would have to solve
        self.used = np.zeros((n, n), bool)
        self._lb_user = -1
        self._lb = None
        self.solved = 0
        self.solve_seconds = 0.0

    def has_preference(self, u) -> bool:
        return self.support[u] is not None

    def _cost(self, rows, cols):
        if self._dense is not None:
            return self._dense[np.ix_(rows, cols)]
        return self.metric.submatrix(rows, cols)

    def _solve(self, u, v) -> float:
        su, mu = self.support[u], self.mass[u]
        sv, mv = self.support[v], self.mass[v]
        if su is None or sv is None:
            raise DegenerateUser(f"user {u if su is None else v} has no preference")
        scale = 1.0
        if self.reduce:
            _, ia, ib = np.intersect1d(su, sv, assume_unique=True, return_indices=True)
            if len(ia):
                shared = np.minimum(mu[ia], mv[ib])
                mu = mu.copy()
                mv = mv.copy()
                mu[ia] -= shared
                mv[ib] -= shared
                keep_u = mu > 0
                keep_v = mv > 0
                su, mu = su[keep_u], mu[keep_u]
                sv, mv = sv[keep_v], mv[keep_v]
                if len(su) == 0 or len(sv) == 0:
                    return 0.0
                left_u, left_v = mu.sum(), mv.sum()
                scale = 0.5 * (left_u + left_v)
                mu = mu / left_u
                mv = mv / left_v
        C = self._cost(su, sv)
        if self.solver == "exact":
            return scale * solve_exact_cost(mu, mv, np.ascontiguousarray(C))
        sol = solve(TransportProblem(mu, mv, C), self.solver, epsilon=self.epsilon)
        return scale * sol.optimal_cost

    @property
    def pairs_used(self) -> int:
        return int(np.count_nonzero(np.triu(self.used, 1)))

    def distance(self, u, v) -> float:
        a, b = (u, v) if u < v else (v, u)
        self.used[a, b] = True
        d = self.table[u, v]
        if d == d:
            return float(d)
        t0 = time.perf_counter()
        d = max(self._solve(a, b), 0.0)
        self.solve_seconds += time.perf_counter() - t0
        self.solved += 1
        self.table[a, b] = self.table[b, a] = d
        return d

    def lower_bounds(self, u) -> np.ndarray:
        """Relaxed lower bounds on PMD(u, v) for every user v (inf without preference)."""
        if self._lb_user != u:
            n = self.ratings.num_users
            out = np.full(n, np.inf)
            cand = np.array([v for v in range(n) if self.support[v] is not None], np.int64)
            if self.support[u] is not None and len(cand):
                rows = self._dense[self.support[u]] if self._dense is not None \
                    else self.metric.rows(self.support[u])
                vals = np.empty(len(cand))
                relaxed_bounds_csr(self.mass[u], np.ascontiguousarray(rows), self._indptr,
                                   self._indices, self._data, cand, vals)
                out[cand] = vals
            self._lb_user, self._lb = u, out
        return self._lb

    def top_k(self, u, candidates, k):
        """The ``k`` closest candidates with distance below ``d_max``.

        Returns ``(users, distances)`` sorted by distance to ``TIE_DECIMALS``
        places, ties by user id.
        Exact: candidates are visited in lower-bound order and the scan
        stops once the bound exceeds the current K-th distance.
        """
        candidates = np.asarray(candidates, dtype=np.int64)
        candidates = candidates[candidates != u]
        if self.support[u] is None or len(candidates) == 0 or k < 1:
            return np.zeros(0, np.int64), np.zeros(0)
        lb = self.lower_bounds(u)[candidates]
        order = np.lexsort((candidates, lb))
        heap = []  # (-d, -v): the root is the worst kept neighbor
        for idx in order:
            bound = lb[idx]
            if bound >= self.d_max:
                break
            if len(heap) == k and bound > -heap[0][0] + PRUNE_SLACK:
                break
            v = int(candidates[idx])
            d = self.distance(u, v)
            if d >= self.d_max:
                continue
            item = (-round(d, TIE_DECIMALS), -v)
            if len(heap) < k:
                heapq.heappush(heap, item)
            elif item > heap[0]:
                heapq.heapreplace(heap, item)
        best = sorted((-nd, -nv) for nd, nv in heap)
        users = np.array([v for _, v in best], np.int64)
        dists = np.array([self.distance(u, v) for v in users])
        return users, dists
