"""
The Dantzig Selector, posed as a convex program and handed to cvxpy
"""

from __future__ import annotations

import logging

import cvxpy as cp
import numpy as np
from numpy.typing import ArrayLike

from sparsechan.linops import dense
from sparsechan.sim_types import (
    ConvergenceError,
    DimensionError,
    DomainError,
    Estimate,
    Estimator,
    InfeasibleError,
)

logger = logging.getLogger(__name__)

# accepted violation of the correlation constraint after the solve
FEASIBILITY_TOL = 1e-6

SOLVED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
INFEASIBLE = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)


def dantzig_selector(A, y: ArrayLike, gamma: float) -> Estimate:
    """
    Minimizes ‖θ‖₁ subject to ‖Aᵀ(Aθ − y)‖∞ <= γ

    The constraint is written with the precomputed gram AᵀA and correlation Aᵀy. cvxpy's default
    conic solver is deterministic for identical inputs.

    :raises DomainError: if γ is negative
    :raises InfeasibleError: if the solver certifies infeasibility
    :raises ConvergenceError: if the solver stops without an optimal point or the returned
                              point violates the constraint by more than 1e-6
    """
    a = dense(A)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (a.shape[0],):
        raise DimensionError(f"y has shape {y.shape}, expected ({a.shape[0]},)")
    if gamma < 0:
        raise DomainError("gamma must be non-negative")

    gram = a.T @ a
    correlation = a.T @ y

    theta = cp.Variable(a.shape[1])
    problem = cp.Problem(
        cp.Minimize(cp.norm1(theta)),
        [cp.norm_inf(gram @ theta - correlation) <= gamma],
    )

    try:
        problem.solve()
    except cp.SolverError as err:
        raise ConvergenceError(f"Dantzig selector solver failed: {err}") from err

    if problem.status in INFEASIBLE:
        raise InfeasibleError(f"Dantzig selector is infeasible ({problem.status})")
    if problem.status not in SOLVED or theta.value is None:
        raise ConvergenceError(
            f"Dantzig selector solver stopped with status {problem.status}",
            last_iterate=theta.value,
            diagnostics={"status": problem.status},
        )

    solution = np.asarray(theta.value, dtype=np.float64)
    violation = float(np.max(np.abs(gram @ solution - correlation))) - gamma
    if violation > FEASIBILITY_TOL:
        raise ConvergenceError(
            f"Dantzig selector solution violates the constraint by {violation:.3g}",
            last_iterate=solution,
            diagnostics={"status": problem.status, "violation": violation},
        )

    iterations = problem.solver_stats.num_iters if problem.solver_stats is not None else None
    logger.debug("Dantzig selector solved (%s) in %s iterations", problem.status, iterations)
    return Estimate(h_hat=solution, estimator_id="ds", iterations_used=int(iterations or 0))


class DantzigEstimator(Estimator):
    """
    Dantzig Selector on the projected signal
    """

    def get_id(self) -> str:
        return "ds"

    def run(self, trial):
        return [dantzig_selector(trial.effective, trial.y, self.cfg.gamma)]
