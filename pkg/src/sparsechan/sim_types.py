"""
Module containing the experiment configuration, the estimator plug-in base class and all
package exceptions
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields
import json
import math
import pathlib
import types
from typing import TYPE_CHECKING, Union, get_args, get_origin, get_type_hints

import numpy as np
from numpy.typing import NDArray

if TYPE_CHECKING:
    from sparsechan.harness import Trial


CONFIG_VERSION = 1

ESTIMATOR_IDS = (
    "sliding",
    "max_energy",
    "hn_oracle_p",
    "hn_fixed_p",
    "pea_cs",
    "mp",
    "ds",
)


# region Exceptions


class SparseChanError(Exception):
    """
    Base class of every exception raised by the sparsechan package
    """


class DimensionError(SparseChanError, ValueError):
    """
    An Exception raised when operand shapes do not agree
    """


class DomainError(SparseChanError, ValueError):
    """
    An Exception raised when an argument lies outside the domain of an operation
    """


class SingularityError(SparseChanError):
    """
    An Exception raised when a matrix or design is singular where an inverse is required
    """


class ConvergenceError(SparseChanError):
    """
    An Exception raised when an iterative method does not reach its tolerance

    The last iterate and any solver diagnostics are kept on the exception.
    """

    def __init__(self, message: str, last_iterate=None, diagnostics: dict | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.diagnostics = diagnostics if diagnostics is not None else {}


class DivergenceError(SparseChanError):
    """
    An Exception raised when an iteration produces non-finite values
    """


class InfeasibleError(SparseChanError):
    """
    An Exception raised when a solver certifies that a problem has no feasible point
    """


class DegenerateInputError(SparseChanError, ValueError):
    """
    An Exception raised when an input carries no usable information (e.g. an all-zero estimate)
    """


class ContractViolationError(SparseChanError):
    """
    An Exception raised when a caller hands over an operand that breaks a documented contract
    """


class BadConfigError(SparseChanError):
    """
    An Exception raised when the format or typing of a Config is wrong
    """


class EstimatorRegistrationError(SparseChanError):
    """
    The exception raised when two estimators are registered under the same id
    """


# endregion


@dataclass
class ExperimentConfig:
    """
    The class containing all settings of a Monte Carlo channel estimation experiment

    Defaults reproduce the reference setup: a 200 symbol training sequence, a delay spread of
    100 taps with 3 non-zero taps, and a 50 row measurement matrix.
    """

    config_version: int = CONFIG_VERSION

    M: int = 200
    N: int = 100
    S: int = 3
    K: int = 50

    snr_db_list: list[float] = field(
        default_factory=lambda: [float(v) for v in range(0, 21, 2)]
    )
    trials: int = 200
    seed: int = 2009
    workers: int = 1

    estimators: list[str] = field(default_factory=lambda: list(ESTIMATOR_IDS))

    gamma: float = 0.24
    P: Union[float, str] = 4.6
    p_grid: list[float] = field(
        default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 4.6, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
    )
    N_t: int = 21

    amplitude_law: str = "uniform"
    amplitude_floor: float = 0.1
    initial_estimate: str = "max_energy"
    log_base: str = "e"
    lambda_exponent: float = 1.0
    lambda_fit_range: list[int] = field(default_factory=lambda: [50, 150, 10])
    lambda_fit_trials: int = 20
    fit_intercept: Union[float, None] = None
    fit_slope: Union[float, None] = None

    hn_max_iters: int = 500
    hn_tol: float = 1e-8
    mp_refine: int = 0
    crb_mode: str = "genie"

    @classmethod
    def from_json(cls, file_path: str | pathlib.Path) -> "ExperimentConfig":
        """
        Generates an ExperimentConfig object from the json file found at the file path

        Relative paths are resolved against the current working directory. The file holds a
        single flat object; every key must name a field of ExperimentConfig.

        :param file_path: The file path of the json experiment config
        :type file_path: str
        :return: The validated ExperimentConfig generated from the json file
        :rtype: ExperimentConfig
        """

        path = pathlib.Path(file_path).resolve()

        config: ExperimentConfig = ExperimentConfig()

        try:
            with open(path, "r", encoding="utf-8") as file:
                data = json.load(file)
        except json.JSONDecodeError as err:
            raise BadConfigError(
                f"{path}:{err.lineno}:{err.colno}: {err.msg}"
            ) from err
        except OSError as err:
            raise BadConfigError(f'cannot read config "{path}": {err}') from err

        if not isinstance(data, dict):
            raise BadConfigError(f"{path}: top level must be a key-value object")

        hints = get_type_hints(config.__class__)

        unknown = sorted(set(data) - set(hints))
        if unknown:
            raise BadConfigError(f'unknown config key "{unknown[0]}"')

        for key, expected_type in hints.items():
            if key not in data:
                continue

            value = data[key]

            if not cls._check_type(value, expected_type):
                raise BadConfigError(f'"{key}" must be of type {_type_name(expected_type)}')

            setattr(config, key, _as_declared(value, expected_type))

        config.validate()
        return config

    @classmethod
    def _check_type(cls, value, expected_type) -> bool:
        """
        Returns if a value is an instance of a type while accounting for generics
        """
        origin = get_origin(expected_type)

        if origin is None:
            if expected_type is float:
                return isinstance(value, (int, float)) and not isinstance(value, bool)
            if expected_type is int:
                return isinstance(value, int) and not isinstance(value, bool)
            if expected_type is type(None):
                return value is None
            return isinstance(value, expected_type)

        if origin in (Union, types.UnionType):
            return any(cls._check_type(value, arg) for arg in get_args(expected_type))

        if origin is list:
            (item_type,) = get_args(expected_type) or (object,)
            return isinstance(value, list) and all(
                cls._check_type(item, item_type) for item in value
            )

        if origin is dict:
            return isinstance(value, dict)

        return isinstance(value, origin)

    def validate(self) -> "ExperimentConfig":
        """
        Enforces every invariant of the config

        :raises BadConfigError: naming the first offending field
        :return: self, for chaining
        """

        if self.config_version != CONFIG_VERSION:
            raise BadConfigError(
                f'"config_version" {self.config_version} is not supported (expected {CONFIG_VERSION})'
            )

        for name in ("M", "N", "S", "K", "trials", "N_t", "workers", "hn_max_iters"):
            if getattr(self, name) < 1:
                raise BadConfigError(f'"{name}" must be at least 1')

        if self.N_t < 2:
            raise BadConfigError('"N_t" must be at least 2')
        if self.S > self.N:
            raise BadConfigError('"S" cannot exceed the delay spread "N"')
        if self.K > self.M + self.N - 1:
            raise BadConfigError('"K" cannot exceed the received signal length M+N-1')
        if not self.snr_db_list:
            raise BadConfigError('"snr_db_list" must not be empty')
        if any(math.isnan(v) or v == -math.inf for v in self.snr_db_list):
            raise BadConfigError('"snr_db_list" must not contain NaN or -Infinity')
        if self.mp_refine < 0:
            raise BadConfigError('"mp_refine" must not be negative')
        if self.gamma < 0:
            raise BadConfigError('"gamma" must not be negative')
        if self.hn_tol <= 0:
            raise BadConfigError('"hn_tol" must be positive')
        if self.lambda_fit_trials < 1:
            raise BadConfigError('"lambda_fit_trials" must be at least 1')

        unknown = [e for e in self.estimators if e not in ESTIMATOR_IDS]
        if unknown:
            raise BadConfigError(f'"estimators" contains unknown estimator "{unknown[0]}"')
        if len(set(self.estimators)) != len(self.estimators):
            raise BadConfigError('"estimators" lists an estimator twice')

        if isinstance(self.P, str):
            if self.P != "oracle":
                raise BadConfigError('"P" must be a positive number or "oracle"')
            if "hn_fixed_p" in self.estimators:
                raise BadConfigError('"P" must be numeric when "hn_fixed_p" is selected')
        elif self.P <= 0:
            raise BadConfigError('"P" must be positive')

        if not self.p_grid or any(p <= 0 for p in self.p_grid):
            raise BadConfigError('"p_grid" must be non-empty and positive')

        choices = {
            "amplitude_law": ("uniform", "gaussian-clipped"),
            "initial_estimate": ("max_energy", "sliding"),
            "log_base": ("e", "2", "10"),
            "crb_mode": ("genie", "plugin"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise BadConfigError(f'"{name}" must be one of {", ".join(allowed)}')

        if not 0.0 <= self.amplitude_floor < 1.0:
            raise BadConfigError('"amplitude_floor" must lie in [0, 1)')
        if self.lambda_exponent <= 0:
            raise BadConfigError('"lambda_exponent" must be positive')

        if len(self.lambda_fit_range) != 3 or self.lambda_fit_range[2] < 1:
            raise BadConfigError('"lambda_fit_range" must be [low, high, step] with step >= 1')
        low, high, _ = self.lambda_fit_range
        if low < 2 or high <= low:
            raise BadConfigError('"lambda_fit_range" needs 2 <= low < high')

        if (self.fit_intercept is None) != (self.fit_slope is None):
            raise BadConfigError('"fit_intercept" and "fit_slope" must be given together')

        return self

    def to_dict(self) -> dict:
        """
        :return: the config as a plain dictionary, in field order
        :rtype: dict
        """
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _type_name(expected_type) -> str:
    return getattr(expected_type, "__name__", None) or str(expected_type)


def _accepts_float(expected_type) -> bool:
    if expected_type is float:
        return True
    if get_origin(expected_type) in (Union, types.UnionType):
        return float in get_args(expected_type)
    return False


def _as_declared(value, expected_type):
    # JSON has no separate integer and real types; 10 in a real field means 10.0
    if get_origin(expected_type) is list:
        (item_type,) = get_args(expected_type) or (object,)
        return [_as_declared(item, item_type) for item in value]
    if isinstance(value, int) and not isinstance(value, bool) and _accepts_float(expected_type):
        return float(value)
    return value


@dataclass(frozen=True, eq=False)
class Estimate:
    """
    A channel estimate produced by one estimator

    ``label`` tells variants of the same estimator apart (the divisor tried by the oracle
    search, for example); ``note`` carries estimator specific bookkeeping such as the threshold
    index PEA-CS picked.
    """

    h_hat: NDArray[np.float64]
    estimator_id: str
    iterations_used: int = 0
    label: str = ""
    note: str = ""

    def __post_init__(self):
        h_hat = np.array(self.h_hat, dtype=np.float64)
        if h_hat.ndim != 1:
            raise DimensionError("an estimate must be a 1-D tap vector")
        if not np.all(np.isfinite(h_hat)):
            raise DivergenceError(f"estimate from {self.estimator_id} has non-finite taps")
        h_hat.setflags(write=False)
        object.__setattr__(self, "h_hat", h_hat)

    @property
    def delay_spread(self) -> int:
        """
        :return: the number of taps of the estimate
        :rtype: int
        """
        return int(self.h_hat.shape[0])


class Estimator(ABC):
    """
    An abstract class used for the harness to be able to run different channel estimators
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg

    @abstractmethod
    def get_id(self) -> str:
        """
        :return: The identifier the estimator is registered and reported under
        :rtype: str
        """

        raise NotImplementedError

    @abstractmethod
    def run(self, trial: "Trial") -> list[Estimate]:
        """
        Estimates the channel of a single Monte Carlo trial

        Estimators that search over a tuning parameter return one Estimate per candidate;
        the harness keeps the candidate with the lowest mean error over all trials.

        :param trial: The generated data of the trial
        :type trial: Trial
        :return: The candidate estimates, at least one
        :rtype: list[Estimate]
        """

        raise NotImplementedError
