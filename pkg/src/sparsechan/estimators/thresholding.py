"""
Iterative thresholding recovery: the gradient-plus-hard-threshold iteration, its threshold G,
the linearized threshold model G = (a + σ)·b and the structured threshold set built from an
initial estimate
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
import logging
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from sparsechan.linops import dense
from sparsechan.measurement import EigFit
from sparsechan.sim_types import (
    DegenerateInputError,
    DimensionError,
    DivergenceError,
    DomainError,
    Estimate,
    Estimator,
)

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class HNConfig:
    """
    Parameters of the thresholded iteration

    :param B: bound on the (normalized) signal amplitude
    :param sigma: noise standard deviation
    :param lam: step normalizer, at least λ_max(AᵀA)
    :param P: divisor applied to the threshold; the iteration thresholds at G/P
    """

    B: float
    sigma: float
    lam: float
    P: float = 1.0
    max_iters: int = 500
    fixpoint_tol: float = 1e-8

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError("sigma must be non-negative")
        if self.lam <= 0:
            raise DomainError("lambda must be positive")
        if self.P <= 0:
            raise DomainError("divisor P must be positive")
        if self.B + self.sigma <= 0:
            raise DomainError("B + sigma must be positive")
        if self.max_iters < 1 or self.fixpoint_tol <= 0:
            raise DomainError("max_iters must be >= 1 and fixpoint_tol positive")

    @property
    def epsilon(self) -> float:
        """
        :return: ε = 1/(50(B+σ)²)
        """
        return 1.0 / (50.0 * (self.B + self.sigma) ** 2)


@dataclass(frozen=True)
class ThresholdModel:
    """
    Linearized threshold G(σ) = (a + σ)·b for fixed M and N
    """

    a: float
    b: float
    M: int
    N: int

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise DomainError("threshold model needs a > 0 and b > 0")

    def g(self, sigma: float) -> float:
        """
        :return: G at noise level sigma
        """
        return (self.a + sigma) * self.b


@dataclass(frozen=True, eq=False)
class ThresholdSet:
    """
    The thresholds t(1..N_t) handed to the parallel estimator, with the quantized G levels
    they were built from
    """

    thresholds: NDArray[np.float64]
    levels: NDArray[np.float64]
    sigma_low: float
    sigma_high: float
    delta: float

    def __len__(self) -> int:
        return int(self.thresholds.size)


def hn_threshold(
    sigma: float,
    model: ThresholdModel | None = None,
    *,
    M: int | None = None,
    N: int | None = None,
    lam: float | None = None,
    lambda_exponent: float = 1.0,
) -> float:
    """
    Returns the decision threshold G

    With a model, G = (a + σ)·b. Otherwise G = sqrt(2·ln2·lnN/ε) / λ^lambda_exponent with
    ε = 1/(50(1/√M + σ)²). An exponent of 1 reproduces the linearized model exactly; 0.5 keeps
    λ under the square root.

    :raises DomainError: if λ is not positive, σ is negative or raw inputs are missing
    """
    if sigma < 0:
        raise DomainError("sigma must be non-negative")

    if model is not None:
        return model.g(sigma)

    if M is None or N is None or lam is None:
        raise DomainError("hn_threshold needs either a model or M, N and lam")
    if lam <= 0:
        raise DomainError("lambda must be positive")
    if M < 1 or N < 2:
        raise DomainError("hn_threshold needs M >= 1 and N >= 2")

    epsilon = 1.0 / (50.0 * (1.0 / math.sqrt(M) + sigma) ** 2)
    return math.sqrt(2.0 * LOG2 * math.log(N) / epsilon) / lam**lambda_exponent


def calibrate_threshold_model(
    M: int, N: int, fit: EigFit, lambda_exponent: float = 1.0
) -> ThresholdModel:
    """
    Substitutes the fitted λ(N) and ε into G to obtain (a, b)

    a = 1/√M and b = sqrt(2·ln2·50·lnN) / λ(N)^lambda_exponent.

    :raises DomainError: if the fit gives λ(N) <= 0
    """
    if M < 1 or N < 2:
        raise DomainError("calibration needs M >= 1 and N >= 2")

    lam = fit.at(N)
    if lam <= 0:
        raise DomainError(f"eigenvalue fit gives λ({N}) = {lam:.6g}, which is not positive")

    return ThresholdModel(
        a=1.0 / math.sqrt(M),
        b=math.sqrt(2.0 * LOG2 * 50.0 * math.log(N)) / lam**lambda_exponent,
        M=M,
        N=N,
    )


def threshold_set(
    initial: Estimate,
    model: ThresholdModel,
    sigma_range: Sequence[float],
    N_t: int,
) -> ThresholdSet:
    """
    Builds the structured threshold set

    G is sampled at N_t evenly spaced noise levels over [σ_l, σ_h]; the initial estimate's
    largest magnitude is split into N_t equal steps Δ; t(i) = G_i·(i·Δ)/max{G}.

    :raises DomainError: for a reversed σ range or N_t < 2
    :raises DegenerateInputError: if the initial estimate is all zero
    """
    sigma_low, sigma_high = (float(s) for s in sigma_range)
    if sigma_low > sigma_high or sigma_low < 0:
        raise DomainError("sigma range must satisfy 0 <= σ_l <= σ_h")
    if N_t < 2:
        raise DomainError("N_t must be at least 2")

    peak = float(np.max(np.abs(initial.h_hat)))
    if peak == 0.0:
        raise DegenerateInputError("initial estimate is all zero")

    levels = np.array([model.g(s) for s in np.linspace(sigma_low, sigma_high, N_t)])
    delta = peak / N_t
    steps = np.arange(1, N_t + 1) * delta
    thresholds = levels * steps / levels.max()

    thresholds.setflags(write=False)
    levels.setflags(write=False)
    return ThresholdSet(
        thresholds=thresholds,
        levels=levels,
        sigma_low=sigma_low,
        sigma_high=sigma_high,
        delta=delta,
    )


def hn_recover(
    A,
    y: ArrayLike,
    G: float,
    cfg: HNConfig,
    theta0: ArrayLike | None = None,
) -> Estimate:
    """
    Runs the thresholded gradient iteration

    χ = θ + (1/λ)·Aᵀ(y − Aθ); θ keeps χₖ where |χₖ| >= G/P and is zero elsewhere. Starts from
    zero unless ``theta0`` is given and stops once the sup-norm change falls below the
    fix-point tolerance or after ``max_iters`` iterations.

    :raises DomainError: if G is negative
    :raises DivergenceError: if an iterate is not finite (λ too small)
    """
    a = dense(A)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (a.shape[0],):
        raise DimensionError(f"y has shape {y.shape}, expected ({a.shape[0]},)")
    if G < 0:
        raise DomainError("threshold G must be non-negative")

    applied = G / cfg.P
    step = 1.0 / cfg.lam

    theta = np.zeros(a.shape[1]) if theta0 is None else np.array(theta0, dtype=np.float64)
    if theta.shape != (a.shape[1],):
        raise DimensionError("theta0 does not match the columns of A")

    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            chi = theta + step * (a.T @ (y - a @ theta))

        # NaN fails the threshold comparison, so check before it can be zeroed
        if not np.all(np.isfinite(chi)):
            raise DivergenceError(
                f"iterate became non-finite after {iterations} iterations; λ={cfg.lam:.6g} is too small"
            )

        updated = np.where(np.abs(chi) >= applied, chi, 0.0)
        change = float(np.max(np.abs(updated - theta)))
        theta = updated
        if change < cfg.fixpoint_tol:
            break
    else:
        logger.debug("thresholded iteration stopped at max_iters=%d", cfg.max_iters)

    return Estimate(h_hat=theta, estimator_id="hn", iterations_used=iterations)


def hn_config_for(trial, cfg, P: float) -> HNConfig:
    """
    :return: the HNConfig of a trial: B = 1/√M, the trial's σ and λ_max(AᵀA)
    """
    return HNConfig(
        B=1.0 / math.sqrt(cfg.M),
        sigma=trial.sigma,
        lam=trial.lam,
        P=P,
        max_iters=cfg.hn_max_iters,
        fixpoint_tol=cfg.hn_tol,
    )


class FixedDivisorHN(Estimator):
    """
    Thresholded iteration with the configured divisor P
    """

    def get_id(self) -> str:
        return "hn_fixed_p"

    def run(self, trial):
        G = hn_threshold(trial.sigma, trial.threshold_model)
        estimate = hn_recover(trial.effective, trial.y, G, hn_config_for(trial, self.cfg, self.cfg.P))
        return [
            Estimate(
                h_hat=estimate.h_hat,
                estimator_id=self.get_id(),
                iterations_used=estimate.iterations_used,
                label=f"P={self.cfg.P:g}",
            )
        ]


class OracleDivisorHN(Estimator):
    """
    Thresholded iteration run once per divisor of the grid; the harness keeps the divisor
    with the lowest mean error at each SNR
    """

    def get_id(self) -> str:
        return "hn_oracle_p"

    def run(self, trial):
        G = hn_threshold(trial.sigma, trial.threshold_model)
        candidates = []
        for p in self.cfg.p_grid:
            estimate = hn_recover(trial.effective, trial.y, G, hn_config_for(trial, self.cfg, p))
            candidates.append(
                Estimate(
                    h_hat=estimate.h_hat,
                    estimator_id=self.get_id(),
                    iterations_used=estimate.iterations_used,
                    label=f"P={p:g}",
                )
            )
        return candidates
