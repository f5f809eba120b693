"""
Result tables and their CSV form

Every file is UTF-8 with LF line endings; reals are rendered with 12 significant digits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import pathlib

from sparsechan.analysis import PowerCheckReport, mse_db
from sparsechan.measurement import EigFit
from sparsechan.sim_types import SparseChanError

RESULT_COLUMNS = (
    "snr_db",
    "estimator",
    "mean_mse",
    "mean_mse_db",
    "crb_u",
    "crb_s",
    "trials",
    "failures",
    "extra",
)

ORACLE_COLUMNS = ("snr_db", "p", "mean_mse", "mean_mse_db", "trials", "failures", "best")

LAMBDA_COLUMNS = ("n", "k", "trials", "mean_lambda", "std_err", "mp_edge", "fitted_lambda")

POWER_COLUMNS = (
    "m",
    "n",
    "s",
    "trials",
    "satisfied",
    "rate",
    "per_sample_bound",
    "aggregate_bound",
)


class ResultFormatError(SparseChanError):
    """
    An Exception raised when a results file does not follow the documented layout
    """


def render(value: float) -> str:
    """
    :return: a real rendered with 12 significant digits
    """
    return f"{float(value):.12g}"


@dataclass(frozen=True)
class ResultRow:
    """
    Mean error of one estimator at one SNR, with the bounds averaged over the same trials
    """

    snr_db: float
    estimator: str
    mean_mse: float
    crb_u: float
    crb_s: float
    trials: int
    failures: int = 0
    extra: str = ""

    @property
    def mean_mse_db(self) -> float:
        """
        :return: 10·log10(mean_mse)
        """
        return mse_db(self.mean_mse)


@dataclass
class ResultTable:
    """
    One row per (SNR, estimator) pair, in SNR then registration order
    """

    rows: list[ResultRow] = field(default_factory=list)

    def row(self, snr_db: float, estimator: str) -> ResultRow:
        """
        :raises KeyError: if no row matches
        """
        for candidate in self.rows:
            if candidate.snr_db == snr_db and candidate.estimator == estimator:
                return candidate
        raise KeyError((snr_db, estimator))


@dataclass(frozen=True)
class OracleRow:
    """
    Mean error of the thresholded iteration with one divisor at one SNR
    """

    snr_db: float
    p: float
    mean_mse: float
    trials: int
    failures: int
    best: bool


@dataclass
class OracleTable:
    """
    The full (SNR, P) error grid of a divisor search
    """

    rows: list[OracleRow] = field(default_factory=list)

    def best_p(self) -> dict[float, float]:
        """
        :return: the divisor with the lowest mean error at each SNR
        """
        return {row.snr_db: row.p for row in self.rows if row.best}


def _open_for_write(path: str | pathlib.Path):
    try:
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as err:
        raise OSError(f'cannot write "{path}": {err.strerror or err}') from err


def _write(path: str | pathlib.Path, header, rows) -> None:
    with _open_for_write(path) as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_csv(table: ResultTable, path: str | pathlib.Path) -> None:
    """
    Writes a result table

    :raises OSError: naming the path if it cannot be written
    """
    _write(
        path,
        RESULT_COLUMNS,
        (
            [
                render(row.snr_db),
                row.estimator,
                render(row.mean_mse),
                render(row.mean_mse_db),
                render(row.crb_u),
                render(row.crb_s),
                row.trials,
                row.failures,
                row.extra,
            ]
            for row in table.rows
        ),
    )


def read_csv(path: str | pathlib.Path) -> ResultTable:
    """
    Parses a file written by emit_csv

    :raises ResultFormatError: if the header or a row does not match the layout
    """
    with open(path, "r", encoding="utf-8", newline="") as file:
        reader = csv.reader(file)
        header = next(reader, None)
        if header is None or tuple(header) != RESULT_COLUMNS:
            raise ResultFormatError(f'"{path}" does not start with the result header')

        table = ResultTable()
        for line, record in enumerate(reader, start=2):
            if len(record) != len(RESULT_COLUMNS):
                raise ResultFormatError(f"{path}:{line}: expected {len(RESULT_COLUMNS)} fields")
            try:
                table.rows.append(
                    ResultRow(
                        snr_db=float(record[0]),
                        estimator=record[1],
                        mean_mse=float(record[2]),
                        crb_u=float(record[4]),
                        crb_s=float(record[5]),
                        trials=int(record[6]),
                        failures=int(record[7]),
                        extra=record[8],
                    )
                )
            except ValueError as err:
                raise ResultFormatError(f"{path}:{line}: {err}") from err

    return table


def emit_oracle_csv(table: OracleTable, path: str | pathlib.Path) -> None:
    """
    Writes the (SNR, P) grid of a divisor search; ``best`` is 1 on the winning divisor
    """
    _write(
        path,
        ORACLE_COLUMNS,
        (
            [
                render(row.snr_db),
                render(row.p),
                render(row.mean_mse),
                render(mse_db(row.mean_mse)),
                row.trials,
                row.failures,
                int(row.best),
            ]
            for row in table.rows
        ),
    )


def emit_lambda_csv(fit: EigFit, path: str | pathlib.Path) -> None:
    """
    Writes the per-N eigenvalue means of a λ(N) fit next to the fitted values
    """
    _write(
        path,
        LAMBDA_COLUMNS,
        (
            [
                point.n,
                point.k,
                point.trials,
                render(point.mean_lambda),
                render(point.std_err),
                render(point.mp_edge),
                render(fit.at(point.n)),
            ]
            for point in fit.points
        ),
    )


def emit_power_csv(
    report: PowerCheckReport,
    M: int,
    N: int,
    S: int,
    bounds: tuple[float, float],
    path: str | pathlib.Path,
) -> None:
    """
    Writes the outcome of a power constraint Monte Carlo run as a single row
    """
    satisfied = round(report.rate * report.trials)
    _write(
        path,
        POWER_COLUMNS,
        [
            [
                M,
                N,
                S,
                report.trials,
                satisfied,
                render(report.rate),
                render(bounds[0]),
                render(bounds[1]),
            ]
        ],
    )
