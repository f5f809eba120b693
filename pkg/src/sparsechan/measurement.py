"""
Random projection of the received signal, the effective sensing matrix A = ΦC/√M, the
measurement rank rule and the fit of the top gram eigenvalue against the delay spread
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from sparsechan.linops import (
    Matrix,
    RngStream,
    polynomial_fit,
    rademacher_matrix,
    spectral_top,
)
from sparsechan.signal_model import ConvolutionBasis, ReceivedSignal
from sparsechan.sim_types import ContractViolationError, DimensionError, DomainError

logger = logging.getLogger(__name__)

LOG_BASES = {"e": math.e, "2": 2.0, "10": 10.0}


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """
    A K x (M+N-1) Rademacher matrix with entries ±1/√K
    """

    matrix: Matrix

    @property
    def rank(self) -> int:
        """
        :return: K, the number of measurements
        """
        return int(self.matrix.shape[0])

    @property
    def signal_length(self) -> int:
        """
        :return: the length of the signals the matrix projects
        """
        return int(self.matrix.shape[1])


@dataclass(frozen=True, eq=False)
class EffectiveMatrix:
    """
    The sensing operator A = Φ·(C/√M) seen by the recovery algorithms
    """

    matrix: Matrix
    phi: MeasurementMatrix
    basis: ConvolutionBasis


@dataclass(frozen=True)
class LambdaPoint:
    """
    Mean top eigenvalue measured at one delay spread
    """

    n: int
    k: int
    trials: int
    mean_lambda: float
    std_err: float
    mp_edge: float


@dataclass(frozen=True)
class EigFit:
    """
    Polynomial fit λ(N) of the top gram eigenvalue of a normalized Rademacher matrix

    ``coefficients`` run from the constant term up; for the default linear fit
    λ(N) = intercept + slope·N.
    """

    coefficients: tuple[float, ...]
    n_low: int
    n_high: int
    training_length: int
    residual_norm: float = 0.0
    points: tuple[LambdaPoint, ...] = field(default=())

    @classmethod
    def linear(
        cls, intercept: float, slope: float, n_low: int, n_high: int, training_length: int
    ) -> "EigFit":
        """
        :return: a linear fit built from known constants
        """
        return cls((float(intercept), float(slope)), n_low, n_high, training_length)

    @property
    def intercept(self) -> float:
        """
        :return: the constant term a₀
        """
        return self.coefficients[0]

    @property
    def slope(self) -> float:
        """
        :return: the linear term a₁
        """
        return self.coefficients[1] if len(self.coefficients) > 1 else 0.0

    def at(self, n: float) -> float:
        """
        :return: λ(n)
        """
        return float(np.polynomial.polynomial.polyval(n, self.coefficients))


def gen_measurement(K: int, signal_len: int, rng: RngStream) -> MeasurementMatrix:
    """
    Draws a normalized K x signal_len Rademacher measurement matrix

    :raises DomainError: if K is outside [1, signal_len]
    """
    if not 1 <= K <= signal_len:
        raise DomainError(f"measurement rank K={K} must lie in [1, {signal_len}]")

    matrix = rademacher_matrix(K, signal_len, rng, column_normalize=True)
    matrix.setflags(write=False)
    return MeasurementMatrix(matrix)


def project(phi: MeasurementMatrix, r: ReceivedSignal | ArrayLike) -> NDArray[np.float64]:
    """
    Returns y = Φ·r

    :raises DimensionError: if the signal length does not match the columns of Φ
    """
    samples = np.asarray(getattr(r, "samples", r), dtype=np.float64)
    if samples.shape != (phi.signal_length,):
        raise DimensionError(
            f"signal of shape {samples.shape} cannot be projected by a {phi.matrix.shape} matrix"
        )
    return phi.matrix @ samples


def effective(phi: MeasurementMatrix, C: ConvolutionBasis) -> EffectiveMatrix:
    """
    Returns A = Φ·C for a normalized basis C

    :raises ContractViolationError: if C is not normalized
    :raises DimensionError: if the inner dimensions disagree
    """
    if not C.normalized:
        raise ContractViolationError("the convolution basis must be normalized by 1/sqrt(M)")
    if phi.signal_length != C.rows:
        raise DimensionError(
            f"Φ has {phi.signal_length} columns but the basis has {C.rows} rows"
        )

    matrix = phi.matrix @ C.matrix
    matrix.setflags(write=False)
    return EffectiveMatrix(matrix=matrix, phi=phi, basis=C)


def min_rank(S: int, N: int, log_base: str = "e") -> int:
    """
    Smallest measurement rank K with K >= S·log(N)

    :param log_base: "e" (default), "2" or "10"
    :raises DomainError: if S < 1, N < 2 or the base is unknown
    """
    if S < 1 or N < 2:
        raise DomainError("min_rank needs S >= 1 and N >= 2")
    if log_base not in LOG_BASES:
        raise DomainError(f'unknown log base "{log_base}"')

    return int(math.ceil(S * math.log(N, LOG_BASES[log_base])))


def half_n_rule(n: int) -> int:
    """
    :return: the measurement rank N/2 used for the eigenvalue fit
    """
    return max(1, n // 2)


def lambda_fit(
    M: int,
    N_values: Sequence[int],
    rng: RngStream,
    K_rule: str | int = "half_N",
    trials_per_N: int = 20,
    degree: int = 1,
    workers: int = 1,
) -> EigFit:
    """
    Fits the mean top eigenvalue of normalized K x (M+N-1) Rademacher matrices against N

    For each N, ``trials_per_N`` matrices are drawn from streams forked by (N index, trial) and
    their λ_max(ΦᵀΦ) averaged. Trials may run on ``workers`` threads; the reduction is done in
    N order so the result does not depend on scheduling.

    :param K_rule: "half_N" for K = N/2, or a fixed rank
    :raises DomainError: if fewer than two distinct N values are given
    """
    n_values = [int(n) for n in N_values]
    if len(set(n_values)) < 2:
        raise DomainError("lambda_fit needs at least two distinct delay spreads")
    if min(n_values) < 2:
        raise DomainError("delay spreads must be at least 2")
    if trials_per_N < 1:
        raise DomainError("trials_per_N must be at least 1")

    def rank_for(n: int) -> int:
        if K_rule == "half_N":
            return half_n_rule(n)
        if isinstance(K_rule, int):
            return K_rule
        raise DomainError(f'unknown measurement rank rule "{K_rule}"')

    jobs = [
        (n_index, n, trial)
        for n_index, n in enumerate(n_values)
        for trial in range(trials_per_N)
    ]

    def one(job: tuple[int, int, int]) -> float:
        n_index, n, trial = job
        stream = rng.fork(n_index, trial)
        phi = gen_measurement(rank_for(n), M + n - 1, stream)
        return spectral_top(phi, rng=stream.fork(0))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, jobs))
    else:
        values = [one(job) for job in jobs]

    samples = np.asarray(values).reshape(len(n_values), trials_per_N)

    points = []
    for n_index, n in enumerate(n_values):
        k = rank_for(n)
        row = samples[n_index]
        std_err = float(row.std(ddof=1) / math.sqrt(row.size)) if row.size > 1 else 0.0
        points.append(
            LambdaPoint(
                n=n,
                k=k,
                trials=trials_per_N,
                mean_lambda=float(row.mean()),
                std_err=std_err,
                mp_edge=(math.sqrt((M + n - 1) / k) + 1.0) ** 2,
            )
        )
        logger.debug("N=%d K=%d mean λ=%.6g", n, k, row.mean())

    coefficients, residual = polynomial_fit(
        [p.n for p in points], [p.mean_lambda for p in points], degree=degree
    )

    fit = EigFit(
        coefficients=tuple(float(c) for c in coefficients),
        n_low=min(n_values),
        n_high=max(n_values),
        training_length=M,
        residual_norm=residual,
        points=tuple(points),
    )
    logger.info(
        "λ(N) fit for M=%d: intercept %.6g, slope %.6g", M, fit.intercept, fit.slope
    )
    return fit
