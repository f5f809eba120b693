"""
Evaluation metrics and theoretical baselines: Cramér–Rao bounds, squared error, the signal
power constraint and its Hoeffding bound
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
import logging
import math

import numpy as np
from numpy.typing import NDArray

from sparsechan.linops import RngStream, trace_inverse_gram
from sparsechan.signal_model import (
    ConvolutionBasis,
    SparseChannel,
    build_convolution,
    gen_sparse_channel,
    gen_training,
)
from sparsechan.sim_types import (
    ContractViolationError,
    DimensionError,
    DomainError,
    Estimate,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CrbReport:
    """
    Unstructured and structured bounds at one noise level
    """

    crb_u: float
    crb_s: float
    sigma: float
    support_used: NDArray[np.int64]


@dataclass(frozen=True)
class PowerCheckReport:
    """
    Outcome of the power constraint ‖C·h‖² <= (M+N-1)/M

    A single check has trials = 1 and rate 0 or 1; the Monte Carlo form reports the last
    trial's norm together with the satisfaction rate over all trials.
    """

    norm_sq: float
    bound: float
    satisfied: bool
    trials: int = 1
    rate: float = 0.0


def crb_unstructured(C: ConvolutionBasis, sigma: float) -> float:
    """
    Returns σ²·trace{(CᵀC)⁻¹}

    :raises SingularityError: if CᵀC is singular
    """
    if sigma < 0:
        raise DomainError("sigma must be non-negative")
    return sigma**2 * trace_inverse_gram(C.matrix, "all", pseudo=False)


def crb_structured(C: ConvolutionBasis, sigma: float, support: Iterable[int]) -> float:
    """
    Returns σ²·trace{((C·diag(b̂))ᵀ(C·diag(b̂)))†} with b̂ the 0/1 indicator of the support

    :raises DomainError: if the support is empty
    """
    if sigma < 0:
        raise DomainError("sigma must be non-negative")
    return sigma**2 * trace_inverse_gram(C.matrix, list(support), pseudo=True)


def crb_report(C: ConvolutionBasis, sigma: float, support: Iterable[int]) -> CrbReport:
    """
    :return: both bounds for one trial
    """
    support_used = np.array(sorted(set(int(s) for s in support)), dtype=np.int64)
    return CrbReport(
        crb_u=crb_unstructured(C, sigma),
        crb_s=crb_structured(C, sigma, support_used),
        sigma=sigma,
        support_used=support_used,
    )


def support_of(estimate: Estimate) -> NDArray[np.int64]:
    """
    :return: indices of the non-zero taps of an estimate
    """
    return np.flatnonzero(estimate.h_hat)


def _taps(value) -> NDArray[np.float64]:
    if isinstance(value, Estimate):
        return value.h_hat
    if isinstance(value, SparseChannel):
        return value.taps
    return np.asarray(value, dtype=np.float64)


def mse(h_hat, h) -> float:
    """
    Returns the squared error ‖ĥ − h‖² (not normalized by the tap count)

    :raises DimensionError: if the lengths differ
    """
    estimate, truth = _taps(h_hat), _taps(h)
    if estimate.shape != truth.shape:
        raise DimensionError(
            f"estimate of length {estimate.size} compared with channel of length {truth.size}"
        )
    return float(np.sum((estimate - truth) ** 2))


def mse_db(value: float) -> float:
    """
    :return: 10·log10(value); -inf for 0, NaN for NaN
    """
    if math.isnan(value):
        return math.nan
    if value == 0.0:
        return -math.inf
    return 10.0 * math.log10(value)


def power_check(C: ConvolutionBasis, h: SparseChannel) -> PowerCheckReport:
    """
    Checks ‖C·h‖² against (M+N-1)/M for a normalized basis

    :raises ContractViolationError: if the basis is not normalized
    """
    if not C.normalized:
        raise ContractViolationError("power_check needs the normalized basis")

    norm_sq = float(np.sum((C.matrix @ h.taps) ** 2))
    bound = C.rows / C.training_length
    satisfied = norm_sq <= bound
    return PowerCheckReport(
        norm_sq=norm_sq, bound=bound, satisfied=satisfied, rate=1.0 if satisfied else 0.0
    )


def power_montecarlo(
    M: int,
    N: int,
    S: int,
    trials: int,
    rng: RngStream,
    amplitude_law: str = "uniform",
    amplitude_floor: float = 0.0,
) -> PowerCheckReport:
    """
    Fraction of random (training sequence, channel) pairs meeting the power constraint

    Every trial draws a fresh training sequence and channel from streams forked by trial
    index. S = 0 uses the zero channel.

    :raises DomainError: if trials < 1 or S is outside [0, N]
    """
    if trials < 1:
        raise DomainError("trials must be at least 1")
    if not 0 <= S <= N:
        raise DomainError(f"sparsity S={S} must lie in [0, N={N}]")

    satisfied = 0
    report = None
    for trial in range(trials):
        stream = rng.fork(trial)
        basis = build_convolution(gen_training(M, stream.fork(0)), N, normalize=True)
        if S == 0:
            channel = SparseChannel.zeros(N)
        else:
            channel = gen_sparse_channel(
                N, S, stream.fork(1), amplitude_law=amplitude_law, amplitude_floor=amplitude_floor
            )
        report = power_check(basis, channel)
        satisfied += report.satisfied

    rate = satisfied / trials
    logger.info("power constraint met in %d of %d trials (%.1f%%)", satisfied, trials, 100 * rate)
    return PowerCheckReport(
        norm_sq=report.norm_sq,
        bound=report.bound,
        satisfied=report.satisfied,
        trials=trials,
        rate=rate,
    )


def hoeffding_bound(S: int, M: int, N: int) -> tuple[float, float]:
    """
    Per-sample and aggregate Hoeffding expressions for the power constraint

    per_sample = exp(−1/(2S)) bounds Pr(|xᵢ|² >= 1/M); aggregate = 1 − per_sample^(M+N−1) is the
    printed bound on Pr(‖x‖² <= (M+N−1)/M), reproduced as stated.

    :raises DomainError: if S < 1
    """
    if S < 1:
        raise DomainError("S must be at least 1")
    per_sample = math.exp(-1.0 / (2.0 * S))
    aggregate = 1.0 - per_sample ** (M + N - 1)
    return per_sample, aggregate
