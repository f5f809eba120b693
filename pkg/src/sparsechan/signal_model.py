"""
Sparse channels, BPSK training sequences, the Toeplitz convolution basis and noisy reception
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import toeplitz

from sparsechan.linops import Matrix, RngStream
from sparsechan.sim_types import DimensionError, DomainError

logger = logging.getLogger(__name__)

AMPLITUDE_LAWS = ("uniform", "gaussian-clipped")

# standard deviation of the gaussian-clipped law before clipping to [-1, 1]
GAUSSIAN_SCALE = 0.5


def _frozen(values, dtype=np.float64) -> NDArray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SparseChannel:
    """
    A channel impulse response of ``delay_spread`` taps with non-zero taps only on ``support``
    """

    delay_spread: int
    support: NDArray[np.int64]
    amplitudes: NDArray[np.float64]

    def __post_init__(self):
        support = _frozen(self.support, dtype=np.int64)
        amplitudes = _frozen(self.amplitudes)

        if self.delay_spread < 1:
            raise DomainError("delay spread must be at least 1")
        if support.ndim != 1 or support.shape != amplitudes.shape:
            raise DimensionError("support and amplitudes must be 1-D and of equal length")
        if np.unique(support).size != support.size:
            raise DomainError("support indices must be distinct")
        if support.size and (support.min() < 0 or support.max() >= self.delay_spread):
            raise DimensionError("support index outside the delay spread")
        if np.any(np.abs(amplitudes) > 1.0) or not np.all(np.isfinite(amplitudes)):
            raise DomainError("tap amplitudes must lie in [-1, 1]")

        order = np.argsort(support)
        object.__setattr__(self, "support", _frozen(support[order], dtype=np.int64))
        object.__setattr__(self, "amplitudes", _frozen(amplitudes[order]))

        taps = np.zeros(self.delay_spread)
        taps[self.support] = self.amplitudes
        object.__setattr__(self, "_taps", _frozen(taps))

    @classmethod
    def zeros(cls, delay_spread: int) -> "SparseChannel":
        """
        :return: the all-zero channel of the given delay spread
        """
        return cls(delay_spread, np.empty(0, dtype=np.int64), np.empty(0))

    @property
    def sparsity(self) -> int:
        """
        :return: the number of non-zero taps S
        """
        return int(self.support.size)

    @property
    def taps(self) -> NDArray[np.float64]:
        """
        :return: the full tap vector h of length N
        """
        return self._taps


@dataclass(frozen=True, eq=False)
class TrainingSequence:
    """
    A block of ±1 BPSK symbols used to sound the channel
    """

    symbols: NDArray[np.float64]

    def __post_init__(self):
        symbols = _frozen(self.symbols)
        if symbols.ndim != 1 or symbols.size == 0:
            raise DimensionError("a training sequence must be a non-empty 1-D vector")
        if not np.all(np.abs(symbols) == 1.0):
            raise DomainError("training symbols must all be +1 or -1")
        object.__setattr__(self, "symbols", symbols)

    @property
    def length(self) -> int:
        """
        :return: M
        """
        return int(self.symbols.size)


@dataclass(frozen=True, eq=False)
class ConvolutionBasis:
    """
    The (M+N-1) x N Toeplitz matrix C for which C·h is the full linear convolution of the
    training sequence with h
    """

    matrix: Matrix
    normalized: bool
    source: TrainingSequence
    delay_spread: int

    @property
    def rows(self) -> int:
        """
        :return: M+N-1, the received signal length
        """
        return int(self.matrix.shape[0])

    @property
    def training_length(self) -> int:
        """
        :return: M
        """
        return self.source.length


@dataclass(frozen=True, eq=False)
class ReceivedSignal:
    """
    The received samples r = C·h + n together with the noise standard deviation
    """

    samples: NDArray[np.float64]
    noise_sigma: float

    @property
    def length(self) -> int:
        """
        :return: the number of received samples
        """
        return int(self.samples.size)


def gen_sparse_channel(
    N: int,
    S: int,
    rng: RngStream,
    amplitude_law: str = "uniform",
    amplitude_floor: float = 0.1,
) -> SparseChannel:
    """
    Draws a channel with exactly S non-zero taps at uniformly chosen positions

    The uniform law draws magnitudes uniformly on [amplitude_floor, 1] with a random sign.
    The gaussian-clipped law draws N(0, 0.5²), clips to [-1, 1] and lifts magnitudes below
    the floor up to it. No drawn tap is exactly zero.

    :raises DomainError: if S is outside [1, N] or the law is unknown
    """
    if not 1 <= S <= N:
        raise DomainError(f"sparsity S={S} must lie in [1, N={N}]")
    if amplitude_law not in AMPLITUDE_LAWS:
        raise DomainError(f'unknown amplitude law "{amplitude_law}"')
    if not 0.0 <= amplitude_floor < 1.0:
        raise DomainError("amplitude floor must lie in [0, 1)")

    support = rng.subset(N, S)

    if amplitude_law == "uniform":
        amplitudes = rng.signs(S) * rng.uniform(amplitude_floor, 1.0, S)
        while np.any(amplitudes == 0.0):
            zero = amplitudes == 0.0
            amplitudes[zero] = rng.signs(int(zero.sum())) * rng.uniform(
                amplitude_floor, 1.0, int(zero.sum())
            )
    else:
        raw = np.clip(rng.normal(S, scale=GAUSSIAN_SCALE), -1.0, 1.0)
        signs = np.where(raw < 0.0, -1.0, 1.0)
        amplitudes = signs * np.maximum(np.abs(raw), max(amplitude_floor, np.finfo(float).tiny))

    return SparseChannel(N, support, amplitudes)


def gen_training(M: int, rng: RngStream) -> TrainingSequence:
    """
    Draws M i.i.d. ±1 BPSK symbols

    :raises DomainError: if M is below 1
    """
    if M < 1:
        raise DomainError("training length M must be at least 1")
    return TrainingSequence(rng.signs(M))


def build_convolution(c: TrainingSequence, N: int, normalize: bool = True) -> ConvolutionBasis:
    """
    Builds the full Toeplitz convolution matrix of the training sequence

    Column j holds the training sequence shifted down by j rows, so every column carries all M
    symbols and has norm sqrt(M); with ``normalize`` the matrix is divided by sqrt(M) and the
    columns have unit norm.

    :raises DomainError: if N is below 1
    """
    if N < 1:
        raise DomainError("delay spread N must be at least 1")

    first_column = np.concatenate([c.symbols, np.zeros(N - 1)])
    first_row = np.zeros(N)
    first_row[0] = c.symbols[0]

    matrix = toeplitz(first_column, first_row)
    if normalize:
        matrix = matrix / math.sqrt(c.length)
    matrix.setflags(write=False)

    return ConvolutionBasis(matrix=matrix, normalized=normalize, source=c, delay_spread=N)


def transmit(
    C: ConvolutionBasis, h: SparseChannel, sigma: float, rng: RngStream
) -> ReceivedSignal:
    """
    Passes the training block through the channel and adds white Gaussian noise

    No draws are taken when sigma is 0, so the noiseless signal is exactly C·h.

    :raises DomainError: if sigma is negative
    :raises DimensionError: if basis and channel disagree on the delay spread
    """
    if sigma < 0.0 or math.isnan(sigma):
        raise DomainError("noise sigma must be non-negative")
    if C.delay_spread != h.delay_spread:
        raise DimensionError(
            f"basis delay spread {C.delay_spread} does not match channel {h.delay_spread}"
        )

    samples = C.matrix @ h.taps
    if sigma > 0.0:
        samples = samples + rng.normal(C.rows, scale=sigma)

    return ReceivedSignal(samples=_frozen(samples), noise_sigma=float(sigma))


def snr_to_sigma(snr_db: float, C: ConvolutionBasis, h: SparseChannel) -> float:
    """
    Converts an SNR in dB to the per-sample noise standard deviation

    SNR is the average per-sample signal power P_x = ‖C·h‖²/(M+N-1) over σ², so
    σ = sqrt(P_x / 10^(snr_db/10)). An infinite SNR maps to σ = 0.

    :raises DomainError: for the zero channel (P_x = 0), a NaN SNR or one so low that σ overflows
    """
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise DomainError(f"SNR of {snr_db} dB has no finite noise level")

    signal_power = float(np.sum((C.matrix @ h.taps) ** 2)) / C.rows
    if signal_power == 0.0:
        raise DomainError("cannot set an SNR for a channel with zero output power")

    with np.errstate(divide="ignore", over="ignore"):
        sigma = float(np.sqrt(signal_power / np.power(10.0, snr_db / 10.0)))
    if not math.isfinite(sigma):
        raise DomainError(f"SNR of {snr_db} dB is too low for a finite noise level")
    return sigma


def max_sparsity(M: int, N: int, c: float = 1.0) -> int:
    """
    Largest sparsity S with S <= c·sqrt((M+N-1)/ln N)

    :raises DomainError: if N is below 2
    """
    if N < 2:
        raise DomainError("delay spread N must be at least 2")
    return int(math.floor(c * math.sqrt((M + N - 1) / math.log(N))))
