"""Balanced transport problems and their solutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import Coupling, ItemMetric, Preference
from ..errors import InfeasibleProblem, InvalidCost

BALANCE_TOL = 1e-9


def _mass(x):
    if isinstance(x, Preference):
        return x.support, x.mass
    arr = np.asarray(x, dtype=np.float64)
    return np.arange(len(arr)), arr


@dataclass(frozen=True)
class TransportProblem:
    """Move ``supply`` onto ``demand`` at ``cost[i, j]`` per unit.

    Masses within ``BALANCE_TOL`` of 1 are renormalized; anything further off
    is rejected. ``rows`` / ``cols`` name the support items (indices by
    default).
    """

    supply: np.ndarray
    demand: np.ndarray
    cost: np.ndarray
    rows: Optional[np.ndarray] = None
    cols: Optional[np.ndarray] = None

    def __post_init__(self):
        rows, a = _mass(self.supply)
        cols, b = _mass(self.demand)
        if self.rows is not None:
            rows = np.asarray(self.rows, dtype=np.int64)
        if self.cols is not None:
            cols = np.asarray(self.cols, dtype=np.int64)
        cost = np.ascontiguousarray(self.cost, dtype=np.float64)
        if cost.shape != (len(a), len(b)):
            raise InvalidCost(f"cost shape {cost.shape} does not match marginals "
                              f"({len(a)}, {len(b)})")
        if len(a) == 0 or len(b) == 0:
            raise InfeasibleProblem("empty marginal")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise InvalidCost("costs must be finite and nonnegative")
        if np.any(a < 0) or np.any(b < 0) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InfeasibleProblem("marginals must be finite and nonnegative")
        sa, sb = a.sum(), b.sum()
        if abs(sa - 1.0) > BALANCE_TOL or abs(sb - 1.0) > BALANCE_TOL:
            raise InfeasibleProblem(f"unbalanced marginals: supply {sa!r}, demand {sb!r}")
        object.__setattr__(self, "supply", a / sa)
        object.__setattr__(self, "demand", b / sb)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    @classmethod
    def between(cls, p: Preference, q: Preference, metric: ItemMetric) -> "TransportProblem":
        return cls(p.mass, q.mass, metric.submatrix(p.support, q.support), p.support, q.support)

    @property
    def shape(self):
        return self.cost.shape

    def transposed(self) -> "TransportProblem":
        return TransportProblem(self.demand, self.supply, self.cost.T, self.cols, self.rows)


@dataclass(frozen=True)
class TransportSolution:
    optimal_cost: float
    coupling: Coupling
    iterations: int
    solver: str  # "exact" | "entropic" | "oracle"

    def plan_cost(self, problem: TransportProblem) -> float:
        return float(np.sum(self.coupling.weights * problem.cost))
