from __future__ import annotations

import numpy as np

from ..core import Coupling
from .problem import TransportProblem, TransportSolution
from .simplex import STATUS_OPTIMAL, basis_cost, transport_simplex

MAX_ITER = 10_000_000


def _pivot_tol(cost):
    return 1e-12 * max(1.0, float(cost.max(initial=0.0)))


def solve_exact_cost(supply, demand, cost):
    """Optimal cost only, for hot loops that skip the coupling.

    Inputs are assumed validated (balanced, finite, nonnegative).
    """
    brow, bcol, bflow, _, status = transport_simplex(supply, demand, cost, MAX_ITER,
                                                     _pivot_tol(cost))
    if status != STATUS_OPTIMAL:
        raise RuntimeError("transport simplex hit its iteration cap")
    return basis_cost(brow, bcol, bflow, cost)


def solve_exact(problem: TransportProblem) -> TransportSolution:
    """Globally optimal plan via the transportation simplex."""
    a, b, C = problem.supply, problem.demand, problem.cost
    brow, bcol, bflow, iters, status = transport_simplex(a, b, C, MAX_ITER, _pivot_tol(C))
    if status != STATUS_OPTIMAL:
        raise RuntimeError("transport simplex hit its iteration cap")
    W = np.zeros(C.shape)
    np.add.at(W, (brow, bcol), bflow)
    np.clip(W, 0.0, 1.0, out=W)
    return TransportSolution(
        optimal_cost=float(basis_cost(brow, bcol, bflow, C)),
        coupling=Coupling(problem.rows, problem.cols, W),
        iterations=int(iters),
        solver="exact",
    )
