"""Cheap lower bounds on the exact transport cost.

Dropping one of the two marginal constraints turns the problem into
"send every unit to its nearest partner", whose cost can only be lower. The
larger of the two one-sided relaxations is a valid bound and costs a single
pass over the cost matrix.
"""

import numpy as np
from numba import njit


def relaxed_bound(a, b, C) -> float:
    C = np.asarray(C, dtype=np.float64)
    return float(max(np.asarray(a) @ C.min(axis=1), C.min(axis=0) @ np.asarray(b)))


@njit(cache=True)
def relaxed_bounds_csr(mass_u, dist_rows, indptr, indices, data, candidates, out):
    """Bound between one fixed distribution and many CSR-stored ones.

    ``dist_rows[k, j]`` is the ground distance from the k-th support item of
    the fixed distribution to item ``j``. Candidate rows of the CSR matrix are
    normalized to unit mass on the fly.
    """
    p = len(mass_u)
    col_min = np.empty(p, np.float64)
    for t in range(len(candidates)):
        v = candidates[t]
        lo = indptr[v]
        hi = indptr[v + 1]
        total = 0.0
        for q in range(lo, hi):
            total += data[q]
        for k in range(p):
            col_min[k] = np.inf
        side_v = 0.0
        for q in range(lo, hi):
            j = indices[q]
            best = np.inf
            for k in range(p):
                d = dist_rows[k, j]
                if d < best:
                    best = d
                if d < col_min[k]:
                    col_min[k] = d
            side_v += data[q] / total * best
        side_u = 0.0
        for k in range(p):
            side_u += mass_u[k] * col_min[k]
        out[t] = side_u if side_u > side_v else side_v
    return out
