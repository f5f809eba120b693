"""
Command line front-end

    sparsechan run --config <path> --out <csv>
    sparsechan oracle-p --config <path> --p-grid <comma list> --out <csv>
    sparsechan lambda-fit --m <M> --n-range <lo:hi:step> --out <csv>
    sparsechan power-check --m <M> --n <N> --s <S> --trials <T> --out <csv>

SNR is the average per-sample signal power ‖C·h‖²/(M+N-1) over the noise variance σ², with C
the normalized convolution basis. Exit codes: 0 on success, 1 on a config or usage error, 2 on
any runtime or solver error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from sparsechan.analysis import hoeffding_bound, power_montecarlo
from sparsechan.harness import Harness
from sparsechan.linops import RngStream
from sparsechan.measurement import lambda_fit
from sparsechan.results import emit_csv, emit_lambda_csv, emit_oracle_csv, emit_power_csv
from sparsechan.sim_types import BadConfigError, ExperimentConfig, SparseChanError

logger = logging.getLogger("sparsechan")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _n_range(text: str) -> list[int]:
    try:
        low, high, step = (int(part) for part in text.split(":"))
    except ValueError as err:
        raise argparse.ArgumentTypeError(f'"{text}" is not of the form lo:hi:step') from err
    if step < 1 or high < low:
        raise argparse.ArgumentTypeError(f'"{text}" needs step >= 1 and hi >= lo')
    return list(range(low, high + 1, step))


def _p_grid(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f'"{text}" is not a comma separated list') from err


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which is the runtime error code here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    """
    :return: the argument parser of every sub-command
    """
    parser = _Parser(
        prog="sparsechan",
        description="Compressed-sensing sparse channel estimation experiments. "
        "SNR = (‖C·h‖²/(M+N-1)) / σ² with C the normalized convolution basis.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="log solver details")
    verbosity.add_argument("--quiet", action="store_true", help="log warnings only")

    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser, config: bool = True):
        if config:
            sub.add_argument("--config", required=True, help="JSON experiment config")
        sub.add_argument("--out", required=True, help="CSV file to write")
        sub.add_argument("--seed", type=int, default=None, help="override the seed")
        sub.add_argument("--workers", type=int, default=None, help="worker threads")

    run = commands.add_parser("run", help="Monte Carlo SNR sweep of the configured estimators")
    common(run)

    oracle = commands.add_parser("oracle-p", help="search the threshold divisor P per SNR")
    common(oracle)
    oracle.add_argument("--p-grid", type=_p_grid, default=None, help="e.g. 1,2,4.6,8")

    fit = commands.add_parser("lambda-fit", help="fit λ(N) of normalized Rademacher matrices")
    common(fit, config=False)
    fit.add_argument("--m", type=int, default=200)
    fit.add_argument("--n-range", type=_n_range, default=_n_range("50:150:10"))
    fit.add_argument("--k", type=int, default=None, help="fixed rank instead of K = N/2")
    fit.add_argument("--trials", type=int, default=20, help="matrices per N")
    fit.add_argument("--degree", type=int, default=1)

    power = commands.add_parser("power-check", help="Monte Carlo rate of the power constraint")
    common(power, config=False)
    power.add_argument("--m", type=int, default=200)
    power.add_argument("--n", type=int, default=100)
    power.add_argument("--s", type=int, default=3)
    power.add_argument("--trials", type=int, default=1000)
    power.add_argument("--amplitude-floor", type=float, default=0.0)

    return parser


def _load(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    return config.validate()


def _run(args) -> None:
    harness = Harness(_load(args))
    emit_csv(harness.run_sweep(), args.out)


def _oracle(args) -> None:
    harness = Harness(_load(args))
    grid = args.p_grid if args.p_grid is not None else harness.cfg.p_grid
    emit_oracle_csv(harness.oracle_p_search(grid), args.out)


def _lambda_fit(args) -> None:
    fit = lambda_fit(
        args.m,
        args.n_range,
        RngStream(args.seed if args.seed is not None else 0),
        K_rule=args.k if args.k is not None else "half_N",
        trials_per_N=args.trials,
        degree=args.degree,
        workers=args.workers or 1,
    )
    emit_lambda_csv(fit, args.out)
    print(
        f"intercept={fit.intercept:.12g} slope={fit.slope:.12g} "
        f"residual_norm={fit.residual_norm:.12g}"
    )


def _power_check(args) -> None:
    report = power_montecarlo(
        args.m,
        args.n,
        args.s,
        args.trials,
        RngStream(args.seed if args.seed is not None else 0),
        amplitude_floor=args.amplitude_floor,
    )
    bounds = hoeffding_bound(args.s, args.m, args.n) if args.s >= 1 else (0.0, 1.0)
    emit_power_csv(report, args.m, args.n, args.s, bounds, args.out)
    print(f"rate={report.rate:.12g} ({round(report.rate * report.trials)}/{report.trials})")


COMMANDS = {
    "run": _run,
    "oracle-p": _oracle,
    "lambda-fit": _lambda_fit,
    "power-check": _power_check,
}


def main(argv: list[str] | None = None) -> int:
    """
    Runs one sub-command

    :return: the process exit code
    :rtype: int
    """
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", datefmt="%H:%M:%S")

    try:
        COMMANDS[args.command](args)
    except BadConfigError as err:
        logger.error("config error: %s", err)
        return EXIT_CONFIG
    except (SparseChanError, OSError) as err:
        logger.error("%s", err)
        return EXIT_RUNTIME

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
