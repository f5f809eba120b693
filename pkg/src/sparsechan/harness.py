"""
The Monte Carlo harness: trial generation, estimator runs, aggregation against the Cramér–Rao
bounds and the divisor search
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math
import re

import numpy as np
from numpy.typing import NDArray

from sparsechan.analysis import crb_structured, crb_unstructured, mse, support_of
from sparsechan.estimators import BUILTIN_ESTIMATORS
from sparsechan.estimators.thresholding import (
    ThresholdModel,
    calibrate_threshold_model,
    hn_config_for,
    hn_recover,
    hn_threshold,
)
from sparsechan.linops import RngStream, spectral_top
from sparsechan.measurement import (
    EffectiveMatrix,
    EigFit,
    MeasurementMatrix,
    effective,
    gen_measurement,
    lambda_fit,
    project,
)
from sparsechan.results import OracleRow, OracleTable, ResultRow, ResultTable
from sparsechan.signal_model import (
    ConvolutionBasis,
    ReceivedSignal,
    SparseChannel,
    TrainingSequence,
    build_convolution,
    gen_sparse_channel,
    gen_training,
    snr_to_sigma,
    transmit,
)
from sparsechan.sim_types import (
    DomainError,
    Estimate,
    Estimator,
    EstimatorRegistrationError,
    ExperimentConfig,
    SparseChanError,
)

logger = logging.getLogger(__name__)

# spawn key tags under a (snr, trial) stream
TRAINING_TAG, CHANNEL_TAG, MEASUREMENT_TAG, NOISE_TAG, POWER_ITERATION_TAG = range(5)

# spawn key of the eigenvalue fit; far above any SNR index
LAMBDA_FIT_KEY = 0xFFFF_FFFF

_note_pattern = re.compile(r"(\d+)")


@dataclass(frozen=True, eq=False)
class Trial:
    """
    The data of one Monte Carlo trial; every estimator sees the same instance
    """

    snr_db: float
    snr_index: int
    trial_index: int
    training: TrainingSequence
    channel: SparseChannel
    basis: ConvolutionBasis
    sigma: float
    received: ReceivedSignal
    phi: MeasurementMatrix
    effective: EffectiveMatrix
    y: NDArray[np.float64]
    lam: float
    sigma_range: tuple[float, float]
    threshold_model: ThresholdModel | None


@dataclass(frozen=True)
class _Outcome:
    estimates: list[Estimate] | None
    mses: list[float]
    crb_s: float


@dataclass(frozen=True)
class _TrialResult:
    crb_u: float
    crb_s: float
    outcomes: dict[str, _Outcome]


class Harness:
    """
    The Harness class implements the central object used to run channel estimation experiments
    """

    cfg: ExperimentConfig

    def __init__(self, config: ExperimentConfig | None = None):
        self.cfg = (config if config is not None else ExperimentConfig()).validate()

        self.__rng = RngStream(self.cfg.seed)
        self.__estimators: dict[str, Estimator] = {}
        self.__threshold_model: ThresholdModel | None = None

        for estimator_id in self.cfg.estimators:
            self.__register_estimator(BUILTIN_ESTIMATORS[estimator_id](self.cfg))

    @property
    def estimator_ids(self) -> list[str]:
        """
        :return: the registered estimator ids in registration order
        """
        return list(self.__estimators)

    def __register_estimator(self, estimator: Estimator):
        estimator_id = estimator.get_id()
        if estimator_id in self.__estimators:
            raise EstimatorRegistrationError(f'estimator id "{estimator_id}" is already taken')
        self.__estimators[estimator_id] = estimator

    def register_estimator(self, estimator: Estimator):
        """
        Registers an additional estimator to run on every trial

        :param estimator: The estimator instance
        :type estimator: Estimator
        :raises EstimatorRegistrationError: if its id is already registered
        """
        self.__register_estimator(estimator)

    @property
    def threshold_model(self) -> ThresholdModel:
        """
        The linearized threshold G = (a + σ)·b for the configured M and N

        Built from the configured fit constants, or from a λ(N) fit over
        ``lambda_fit_range`` with K = N/2 the first time it is needed.
        """
        if self.__threshold_model is None:
            self.__threshold_model = calibrate_threshold_model(
                self.cfg.M, self.cfg.N, self.eigen_fit(), self.cfg.lambda_exponent
            )
            logger.info(
                "threshold model G = (%.6g + σ)·%.6g",
                self.__threshold_model.a,
                self.__threshold_model.b,
            )
        return self.__threshold_model

    def eigen_fit(self) -> EigFit:
        """
        :return: the λ(N) fit used for the threshold model
        """
        low, high, step = self.cfg.lambda_fit_range
        if self.cfg.fit_intercept is not None:
            return EigFit.linear(self.cfg.fit_intercept, self.cfg.fit_slope, low, high, self.cfg.M)

        return lambda_fit(
            self.cfg.M,
            list(range(low, high + 1, step)),
            self.__rng.fork(LAMBDA_FIT_KEY),
            K_rule="half_N",
            trials_per_N=self.cfg.lambda_fit_trials,
            workers=self.cfg.workers,
        )

    def make_trial(self, snr_index: int, trial_index: int) -> Trial:
        """
        Generates the data of one trial from the stream forked by (snr_index, trial_index)

        Estimators never draw from these streams, so adding or removing an estimator does not
        change the generated data.
        """
        cfg = self.cfg
        snr_db = float(cfg.snr_db_list[snr_index])
        stream = self.__rng.fork(snr_index, trial_index)

        training = gen_training(cfg.M, stream.fork(TRAINING_TAG))
        channel = gen_sparse_channel(
            cfg.N,
            cfg.S,
            stream.fork(CHANNEL_TAG),
            amplitude_law=cfg.amplitude_law,
            amplitude_floor=cfg.amplitude_floor,
        )
        basis = build_convolution(training, cfg.N, normalize=True)

        sigma = snr_to_sigma(snr_db, basis, channel)
        received = transmit(basis, channel, sigma, stream.fork(NOISE_TAG))

        phi = gen_measurement(cfg.K, basis.rows, stream.fork(MEASUREMENT_TAG))
        sensing = effective(phi, basis)
        y = project(phi, received)
        y.setflags(write=False)

        sigma_range = (
            snr_to_sigma(max(cfg.snr_db_list), basis, channel),
            snr_to_sigma(min(cfg.snr_db_list), basis, channel),
        )

        return Trial(
            snr_db=snr_db,
            snr_index=snr_index,
            trial_index=trial_index,
            training=training,
            channel=channel,
            basis=basis,
            sigma=sigma,
            received=received,
            phi=phi,
            effective=sensing,
            y=y,
            lam=spectral_top(sensing, rng=stream.fork(POWER_ITERATION_TAG)),
            sigma_range=sigma_range,
            threshold_model=self.__threshold_model,
        )

    def __needs_threshold_model(self) -> bool:
        # plug-ins registered from outside may read trial.threshold_model too
        builtin = tuple(BUILTIN_ESTIMATORS.values())
        return any(
            estimator_id in ("hn_oracle_p", "hn_fixed_p", "pea_cs")
            or not isinstance(estimator, builtin)
            for estimator_id, estimator in self.__estimators.items()
        )

    def __map(self, fn: Callable, items: Iterable) -> list:
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def _run_trial(self, snr_index: int, trial_index: int) -> _TrialResult:
        trial = self.make_trial(snr_index, trial_index)

        crb_u = crb_unstructured(trial.basis, trial.sigma)
        crb_genie = crb_structured(trial.basis, trial.sigma, trial.channel.support)

        outcomes: dict[str, _Outcome] = {}
        for estimator_id, estimator in self.__estimators.items():
            try:
                estimates = estimator.run(trial)
                if not estimates:
                    raise DomainError(f"estimator {estimator_id} returned no estimate")
                errors = [mse(estimate, trial.channel) for estimate in estimates]
            except SparseChanError as err:
                logger.warning(
                    "%s failed at %g dB, trial %d: %s", estimator_id, trial.snr_db, trial_index, err
                )
                outcomes[estimator_id] = _Outcome(None, [], crb_genie)
                continue

            crb_s = crb_genie
            if self.cfg.crb_mode == "plugin":
                best = estimates[int(np.argmin(errors))]
                support = support_of(best)
                if support.size:
                    crb_s = crb_structured(trial.basis, trial.sigma, support)

            outcomes[estimator_id] = _Outcome(estimates, errors, crb_s)

        return _TrialResult(crb_u=crb_u, crb_s=crb_genie, outcomes=outcomes)

    def run_sweep(self) -> ResultTable:
        """
        Runs every registered estimator on every (SNR, trial) pair

        Trials may run on ``workers`` threads; results are reduced in (SNR, trial) order so the
        table is identical for any worker count. A trial in which an estimator raises counts
        as a failure for that estimator and is left out of its mean.

        :return: one row per (SNR, estimator)
        :rtype: ResultTable
        """
        if self.__needs_threshold_model():
            _ = self.threshold_model

        table = ResultTable()
        for snr_index, snr_db in enumerate(self.cfg.snr_db_list):
            results = self.__map(
                lambda trial_index: self._run_trial(snr_index, trial_index),
                range(self.cfg.trials),
            )
            table.rows.extend(self._aggregate(float(snr_db), results))
            logger.info("finished %g dB (%d trials)", snr_db, self.cfg.trials)

        return table

    def _aggregate(self, snr_db: float, results: list[_TrialResult]) -> list[ResultRow]:
        crb_u = float(np.mean([r.crb_u for r in results]))
        crb_genie = float(np.mean([r.crb_s for r in results]))

        rows = []
        for estimator_id in self.__estimators:
            outcomes = [r.outcomes[estimator_id] for r in results]
            succeeded = [o for o in outcomes if o.estimates is not None]
            failures = len(outcomes) - len(succeeded)

            if not succeeded:
                rows.append(
                    ResultRow(snr_db, estimator_id, math.nan, crb_u, crb_genie, len(results), failures)
                )
                continue

            means = np.mean(np.array([o.mses for o in succeeded]), axis=0)
            chosen = int(np.argmin(means))
            crb_s = float(np.mean([o.crb_s for o in succeeded])) if self.cfg.crb_mode == "plugin" else crb_genie

            rows.append(
                ResultRow(
                    snr_db=snr_db,
                    estimator=estimator_id,
                    mean_mse=float(means[chosen]),
                    crb_u=crb_u,
                    crb_s=crb_s,
                    trials=len(results),
                    failures=failures,
                    extra=self._extra([o.estimates[chosen] for o in succeeded]),
                )
            )

        return rows

    @staticmethod
    def _extra(estimates: list[Estimate]) -> str:
        parts = []
        if estimates[0].label:
            parts.append(estimates[0].label)

        notes = Counter(e.note for e in estimates if e.note)
        if notes:
            ordered = sorted(
                notes,
                key=lambda note: [int(t) if t.isdigit() else t for t in _note_pattern.split(note)],
            )
            parts.append(" ".join(f"{note}:{notes[note]}" for note in ordered))

        return ";".join(parts)

    def oracle_p_search(self, p_grid: Iterable[float]) -> OracleTable:
        """
        Runs the thresholded iteration with each divisor over the trial set of every SNR

        :param p_grid: the divisors to try, all positive
        :raises DomainError: if the grid is empty or holds a non-positive divisor
        :return: the full (SNR, P) grid with the best divisor per SNR flagged
        :rtype: OracleTable
        """
        grid = [float(p) for p in p_grid]
        if not grid or any(p <= 0 for p in grid):
            raise DomainError("p_grid must be non-empty and positive")

        model = self.threshold_model
        table = OracleTable()

        for snr_index, snr_db in enumerate(self.cfg.snr_db_list):

            def errors_for(trial_index: int) -> list[float | None]:
                trial = self.make_trial(snr_index, trial_index)
                G = hn_threshold(trial.sigma, model)
                values: list[float | None] = []
                for p in grid:
                    try:
                        estimate = hn_recover(
                            trial.effective, trial.y, G, hn_config_for(trial, self.cfg, p)
                        )
                        values.append(mse(estimate, trial.channel))
                    except SparseChanError as err:
                        logger.warning(
                            "P=%g failed at %g dB, trial %d: %s", p, snr_db, trial_index, err
                        )
                        values.append(None)
                return values

            per_trial = self.__map(errors_for, range(self.cfg.trials))

            means = []
            for column, _ in enumerate(grid):
                values = [v[column] for v in per_trial if v[column] is not None]
                means.append(float(np.mean(values)) if values else math.nan)

            finite = [m for m in means if not math.isnan(m)]
            best = means.index(min(finite)) if finite else -1

            for column, p in enumerate(grid):
                failures = sum(v[column] is None for v in per_trial)
                table.rows.append(
                    OracleRow(
                        snr_db=float(snr_db),
                        p=p,
                        mean_mse=means[column],
                        trials=self.cfg.trials,
                        failures=failures,
                        best=column == best,
                    )
                )
            logger.info("best divisor at %g dB: %s", snr_db, grid[best] if best >= 0 else "none")

        return table
