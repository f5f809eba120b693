"""
Matching Pursuit
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike

from sparsechan.linops import dense
from sparsechan.sim_types import DimensionError, DomainError, Estimate, Estimator


def matching_pursuit(
    dictionary,
    y: ArrayLike,
    S: int,
    refine_iters: int = 0,
    tol: float = 1e-12,
) -> Estimate:
    """
    Greedy sparse approximation of y over the columns of a dictionary

    Each of the S iterations picks the column with the largest |correlation| / column norm,
    adds its coefficient and updates the residual; a column picked twice accumulates. With
    ``refine_iters`` the same update continues for up to that many extra iterations, restricted
    to the columns already picked, until their normalized correlation drops below ``tol``
    times ‖y‖.

    :param dictionary: EffectiveMatrix, ConvolutionBasis or raw matrix
    :raises DomainError: if S < 1 or refine_iters < 0
    """
    a = dense(dictionary)
    y = np.asarray(getattr(y, "samples", y), dtype=np.float64)

    if y.shape != (a.shape[0],):
        raise DimensionError(f"y has shape {y.shape}, expected ({a.shape[0]},)")
    if S < 1:
        raise DomainError("S must be at least 1")
    if refine_iters < 0:
        raise DomainError("refine_iters must not be negative")

    norms = np.linalg.norm(a, axis=0)
    usable = norms > 0.0
    safe_norms = np.where(usable, norms, 1.0)

    coeffs = np.zeros(a.shape[1])
    residual = y.copy()
    picked: list[int] = []

    def step(columns: np.ndarray) -> float:
        nonlocal residual
        inner = a[:, columns].T @ residual
        scores = np.where(usable[columns], np.abs(inner) / safe_norms[columns], 0.0)
        best = int(np.argmax(scores))
        j = int(columns[best])
        alpha = inner[best] / safe_norms[j] ** 2 if usable[j] else 0.0

        coeffs[j] += alpha
        residual = residual - alpha * a[:, j]
        if j not in picked:
            picked.append(j)
        return float(scores[best])

    everything = np.arange(a.shape[1])
    iterations = 0
    for _ in range(S):
        step(everything)
        iterations += 1

    floor = tol * max(float(np.linalg.norm(y)), np.finfo(float).tiny)
    for _ in range(refine_iters):
        if step(np.array(picked)) < floor:
            break
        iterations += 1

    return Estimate(h_hat=coeffs, estimator_id="mp", iterations_used=iterations)


class MatchingPursuitEstimator(Estimator):
    """
    Matching Pursuit over the full received signal with the sparsity assumed known
    """

    def get_id(self) -> str:
        return "mp"

    def run(self, trial):
        estimate = matching_pursuit(
            trial.basis, trial.received, self.cfg.S, refine_iters=self.cfg.mp_refine
        )
        return [estimate]
