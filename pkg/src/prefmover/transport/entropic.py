"""Entropy-regularized transport (log-domain Sinkhorn) as an optional fast path.

The Sinkhorn plan is projected onto the feasible set before its cost is
reported, so the returned cost is always an upper bound on the exact optimum.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..core import Coupling
from ..errors import ConvergenceFailure
from .problem import TransportProblem, TransportSolution


def round_to_feasible(P, a, b):
    """Project a nonnegative plan onto the coupling polytope of (a, b).

    Scale rows and then columns down to their targets, and put the missing
    mass back as a rank-one correction. Marginals hold up to rounding.
    """
    P = np.asarray(P, dtype=np.float64)
    rs = P.sum(axis=1)
    x = np.where(rs > 0, np.minimum(a / np.where(rs > 0, rs, 1.0), 1.0), 0.0)
    P = P * x[:, None]
    cs = P.sum(axis=0)
    y = np.where(cs > 0, np.minimum(b / np.where(cs > 0, cs, 1.0), 1.0), 0.0)
    P = P * y[None, :]
    err_r = np.maximum(a - P.sum(axis=1), 0.0)
    err_c = np.maximum(b - P.sum(axis=0), 0.0)
    total = err_r.sum()
    if total > 0:
        P = P + np.outer(err_r, err_c) / total
    return P


@njit(cache=True)
def _sinkhorn_sweeps(f, g, loga, logb, C, eps, count):
    m, n = C.shape
    for _ in range(count):
        for i in range(m):
            hi = -np.inf
            for j in range(n):
                x = (g[j] - C[i, j]) / eps
                if x > hi:
                    hi = x
            s = 0.0
            for j in range(n):
                s += np.exp((g[j] - C[i, j]) / eps - hi)
            f[i] = eps * (loga[i] - hi - np.log(s))
        for j in range(n):
            hi = -np.inf
            for i in range(m):
                x = (f[i] - C[i, j]) / eps
                if x > hi:
                    hi = x
            s = 0.0
            for i in range(m):
                s += np.exp((f[i] - C[i, j]) / eps - hi)
            g[j] = eps * (logb[j] - hi - np.log(s))


def _plan(f, g, C, eps):
    with np.errstate(over="ignore"):
        return np.exp((f[:, None] + g[None, :] - C) / eps)


def _marginal_error(P, a, b):
    return float(np.abs(P.sum(axis=1) - a).sum() + np.abs(P.sum(axis=0) - b).sum())


def _dual(f, g, a, b, C, eps):
    v = f @ a + g @ b - eps * _plan(f, g, C, eps).sum()
    return v if np.isfinite(v) else -np.inf


def _newton_polish(f, g, a, b, C, eps, tol, budget):
    """Damped Newton ascent on the entropic dual, ``g[-1]`` held fixed.

    Small plan entries make the Hessian nearly singular, so each step adds a
    Levenberg-Marquardt shift that grows until the dual increases.
    """
    m, n = C.shape
    lam = 1e-6
    steps = 0
    P = _plan(f, g, C, eps)
    err = _marginal_error(P, a, b)
    while err > tol and steps < budget:
        r, c = P.sum(axis=1), P.sum(axis=0)
        H = np.empty((m + n - 1, m + n - 1))
        H[:m, :m] = np.diag(r)
        H[m:, m:] = np.diag(c[:-1])
        H[:m, m:] = P[:, :-1]
        H[m:, :m] = P[:, :-1].T
        H /= eps
        grad = np.concatenate([a - r, (b - c)[:-1]])
        phi = _dual(f, g, a, b, C, eps)
        eye = H.diagonal().max() * np.eye(m + n - 1)
        while True:
            d = np.linalg.solve(H + lam * eye, grad)
            f_new, g_new = f + d[:m], g + np.append(d[m:], 0.0)
            if _dual(f_new, g_new, a, b, C, eps) >= phi + 1e-4 * (grad @ d):
                f, g = f_new, g_new
                lam = max(lam * 0.1, 1e-14)
                break
            lam *= 10.0
            if lam > 1e6:
                return f, g, steps, err
        steps += 1
        P = _plan(f, g, C, eps)
        err = _marginal_error(P, a, b)
    return f, g, steps, err


def solve_entropic(problem: TransportProblem, epsilon: float, max_iter: int = 100_000,
                   tol: float = 1e-6) -> TransportSolution:
    """Entropic transport at regularization ``epsilon``.

    ``epsilon`` is annealed down from the cost scale, then Sinkhorn sweeps
    run until the L1 marginal error is below ``tol``. When the sweeps stall,
    which happens once ``epsilon`` is far below the cost gaps, damped Newton
    steps finish the job. ``max_iter`` bounds sweeps plus Newton steps. The
    plan is then rounded onto the exact marginals.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    a_full, b_full, C_full = problem.supply, problem.demand, problem.cost
    rows, cols = np.nonzero(a_full > 0)[0], np.nonzero(b_full > 0)[0]
    a, b = a_full[rows], b_full[cols]
    C = np.ascontiguousarray(C_full[np.ix_(rows, cols)])
    m, n = C.shape
    W = np.zeros_like(C_full)
    if m == 1 or n == 1:
        W[np.ix_(rows, cols)] = np.outer(a, b)
        return TransportSolution(float(np.sum(W * C_full)),
                                 Coupling(problem.rows, problem.cols, W), 0, "entropic")
    loga, logb = np.log(a), np.log(b)
    f = np.zeros(m)
    g = np.zeros(n)

    eps = max(float(C.max()), epsilon)
    while eps > epsilon:
        _sinkhorn_sweeps(f, g, loga, logb, C, eps, 10)
        eps = max(eps * 0.5, epsilon)

    it = 0
    err = np.inf
    while it < max_iter:
        step = min(10, max_iter - it)
        _sinkhorn_sweeps(f, g, loga, logb, C, epsilon, step)
        it += step
        last, err = err, _marginal_error(_plan(f, g, C, epsilon), a, b)
        if err <= tol or err > 0.9 * last:
            break
    if err > tol and it < max_iter:
        f, g, steps, err = _newton_polish(f, g, a, b, C, epsilon, tol, max_iter - it)
        it += steps
    if err > tol:
        raise ConvergenceFailure(
            f"entropic solver did not reach marginal error {tol} in {max_iter} iterations", err)

    W[np.ix_(rows, cols)] = round_to_feasible(_plan(f, g, C, epsilon), a, b)
    W = np.clip(W, 0.0, 1.0)
    return TransportSolution(float(np.sum(W * C_full)), Coupling(problem.rows, problem.cols, W),
                             it, "entropic")
