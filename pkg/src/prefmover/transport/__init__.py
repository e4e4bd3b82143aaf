"""Solvers for the balanced transport problem behind the user distance."""

from .bounds import relaxed_bound
from .entropic import round_to_feasible, solve_entropic
from .exact import solve_exact, solve_exact_cost
from .oracle import solve_oracle
from .problem import BALANCE_TOL, TransportProblem, TransportSolution

SOLVERS = ("exact", "entropic")


def solve(problem, solver="exact", epsilon=1e-3, max_iter=100_000):
    if solver == "exact":
        return solve_exact(problem)
    if solver == "entropic":
        return solve_entropic(problem, epsilon, max_iter=max_iter)
    if solver == "oracle":
        return solve_oracle(problem)
    raise ValueError(f"unknown solver {solver!r}")


__all__ = [
    "BALANCE_TOL", "SOLVERS", "TransportProblem", "TransportSolution", "relaxed_bound",
    "round_to_feasible", "solve", "solve_entropic", "solve_exact", "solve_exact_cost",
    "solve_oracle",
]
