"""Independent LP check for small transport problems (tests only)."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from ..core import Coupling
from ..errors import OracleLimitExceeded
from .problem import TransportProblem, TransportSolution

MAX_SUPPORT = 12


def solve_oracle(problem: TransportProblem) -> TransportSolution:
    """Solve the flattened LP with HiGHS' dual simplex.

    Shares no code with the transportation simplex: the coupling is a plain
    vector of ``m * n`` variables under ``m + n`` equality constraints.
    """
    m, n = problem.shape
    if m + n > MAX_SUPPORT:
        raise OracleLimitExceeded(f"oracle handles m + n <= {MAX_SUPPORT}, got {m + n}")
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    rhs = np.concatenate([problem.supply, problem.demand])
    res = linprog(problem.cost.ravel(), A_eq=A, b_eq=rhs, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"oracle LP failed: {res.message}")
    W = np.clip(res.x.reshape(m, n), 0.0, 1.0)
    return TransportSolution(float(problem.cost.ravel() @ res.x), Coupling(problem.rows, problem.cols, W),
                             int(getattr(res, "nit", 0)), "oracle")
