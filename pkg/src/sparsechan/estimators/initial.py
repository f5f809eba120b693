"""
Initial channel estimates: the per-tap sliding correlator and the maximum energy estimate
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from sparsechan.linops import dense
from sparsechan.sim_types import (
    DimensionError,
    Estimate,
    Estimator,
    SingularityError,
)


def _vector(signal: ArrayLike, length: int, name: str) -> NDArray[np.float64]:
    values = np.asarray(getattr(signal, "samples", signal), dtype=np.float64)
    if values.shape != (length,):
        raise DimensionError(f"{name} has shape {values.shape}, expected ({length},)")
    return values


def sliding_correlator(basis, r) -> Estimate:
    """
    Correlates the signal with every column of the basis

    ĥ(n) = cₙᵀr / ‖cₙ‖². Works on the convolution basis with the received signal, or on the
    effective matrix A with the projected vector y.

    :param basis: ConvolutionBasis, EffectiveMatrix or a raw matrix
    :param r: ReceivedSignal or vector of matching length
    :raises SingularityError: if a column has zero norm
    """
    a = dense(basis)
    samples = _vector(r, a.shape[0], "signal")

    energy = np.sum(a * a, axis=0)
    if np.any(energy == 0.0):
        raise SingularityError("basis has a zero-norm column")

    return Estimate(h_hat=(a.T @ samples) / energy, estimator_id="sliding")


def max_energy(A, y: ArrayLike) -> Estimate:
    """
    Returns the maximum energy estimate ĥ = Aᵀy

    :raises DimensionError: if y does not match the rows of A
    """
    a = dense(A)
    return Estimate(h_hat=a.T @ _vector(y, a.shape[0], "y"), estimator_id="max_energy")


class SlidingCorrelatorEstimator(Estimator):
    """
    Sliding correlator over the full received signal
    """

    def get_id(self) -> str:
        return "sliding"

    def run(self, trial):
        return [sliding_correlator(trial.basis, trial.received)]


class MaxEnergyEstimator(Estimator):
    """
    Maximum energy estimate from the projected signal
    """

    def get_id(self) -> str:
        return "max_energy"

    def run(self, trial):
        return [max_energy(trial.effective, trial.y)]
