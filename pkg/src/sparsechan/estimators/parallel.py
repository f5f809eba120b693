"""
Parallel estimation over a structured threshold set (PEA-CS)
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
import logging

import numpy as np
from numpy.typing import ArrayLike, NDArray

from sparsechan.estimators.initial import max_energy, sliding_correlator
from sparsechan.estimators.thresholding import (
    HNConfig,
    ThresholdSet,
    hn_config_for,
    hn_recover,
    threshold_set,
)
from sparsechan.linops import dense
from sparsechan.sim_types import DomainError, Estimate, Estimator

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PeaCsTrace:
    """
    Selection record of one PEA-CS run

    ``derivative[0]`` is NaN: the forward difference starts at the second threshold.
    ``chosen_index`` counts from 1.
    """

    errors: NDArray[np.float64]
    derivative: NDArray[np.float64]
    chosen_index: int
    fallback: bool = False


def select_threshold_index(errors: ArrayLike) -> tuple[int, NDArray[np.float64], bool]:
    """
    Picks the threshold whose residual-sum error changes least

    e'(i) = e(i) − e(i−1) for i >= 2; the index minimizing |e'(i)| among non-zero differences
    wins, ties going to the smaller threshold. When every difference is zero the first index
    is returned and the fallback flag is set.

    :return: (1-based index, e', fallback flag)
    """
    e = np.asarray(errors, dtype=np.float64)
    derivative = np.full(e.shape, np.nan)
    derivative[1:] = np.diff(e)

    magnitude = np.abs(derivative[1:])
    candidates = np.flatnonzero(magnitude != 0.0)
    if candidates.size == 0:
        return 1, derivative, True

    best = candidates[np.argmin(magnitude[candidates])]
    return int(best) + 2, derivative, False


def pea_cs(
    A,
    y: ArrayLike,
    ts: ThresholdSet,
    cfg: HNConfig,
    workers: int = 1,
) -> tuple[Estimate, PeaCsTrace]:
    """
    Runs the thresholded iteration once per threshold and selects one estimate

    Each t(i) is applied as the threshold itself (divisor 1). The error of estimate i is
    e(i) = |Σₖ(y − Aĥᵢ)ₖ|. Recoveries may run on ``workers`` threads; the trace is assembled
    in threshold order.

    :raises DomainError: if the threshold set is empty
    """
    if len(ts) == 0:
        raise DomainError("threshold set is empty")

    a = dense(A)
    y = np.asarray(y, dtype=np.float64)
    direct = replace(cfg, P=1.0)

    def recover(t: float) -> Estimate:
        return hn_recover(a, y, float(t), direct)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            estimates = list(pool.map(recover, ts.thresholds))
    else:
        estimates = [recover(t) for t in ts.thresholds]

    errors = np.array([abs(float(np.sum(y - a @ est.h_hat))) for est in estimates])
    chosen, derivative, fallback = select_threshold_index(errors)

    if fallback:
        logger.debug("all %d threshold estimates coincide, using the smallest threshold", len(ts))

    trace = PeaCsTrace(
        errors=errors, derivative=derivative, chosen_index=chosen, fallback=fallback
    )
    picked = estimates[chosen - 1]
    return (
        Estimate(
            h_hat=picked.h_hat,
            estimator_id="pea_cs",
            iterations_used=picked.iterations_used,
            note=f"t_index={chosen}",
        ),
        trace,
    )


class PeaCsEstimator(Estimator):
    """
    PEA-CS with thresholds built from an initial estimate of the projected signal
    """

    def get_id(self) -> str:
        return "pea_cs"

    def run(self, trial):
        if self.cfg.initial_estimate == "sliding":
            initial = sliding_correlator(trial.effective, trial.y)
        else:
            initial = max_energy(trial.effective, trial.y)

        ts = threshold_set(initial, trial.threshold_model, trial.sigma_range, self.cfg.N_t)
        estimate, _ = pea_cs(trial.effective, trial.y, ts, hn_config_for(trial, self.cfg, 1.0))
        return [estimate]
