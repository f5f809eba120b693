"""
Dense numeric kernels shared by the rest of the package: seeded randomness, Rademacher
matrices, the power iteration, least squares line fits and the trace of an inverse gram
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
import logging

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from sparsechan.sim_types import (
    ConvergenceError,
    DimensionError,
    DomainError,
    SingularityError,
)

logger = logging.getLogger(__name__)

Matrix = NDArray[np.float64]

# eigenvalues below this fraction of the largest one count as exact zeros
PSEUDO_INVERSE_CUTOFF = 1e-10


class RngStream:
    """
    A single-owner stream of random draws

    Draws come from numpy's PCG64 generator seeded through a SeedSequence, so a given
    (seed, spawn key) pair reproduces the same draws on every platform. Concurrent users must
    ``fork`` their own stream instead of sharing one.
    """

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        self.spawn_key = tuple(int(k) for k in spawn_key)
        self.position = 0

        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self.__generator = np.random.Generator(np.random.PCG64(sequence))

    def fork(self, *keys: int) -> "RngStream":
        """
        Derives an independent child stream

        The child depends only on this stream's seed, its spawn key and ``keys``; draws already
        taken from this stream do not affect it.

        :param keys: Non-negative integers appended to the spawn key
        :return: The child stream
        :rtype: RngStream
        """
        return RngStream(self.seed, self.spawn_key + tuple(keys))

    def signs(self, size) -> NDArray[np.float64]:
        """
        :return: i.i.d. draws uniform on {+1, -1}
        """
        draws = self.__generator.integers(0, 2, size=size)
        self.position += int(np.size(draws))
        return 2.0 * draws - 1.0

    def normal(self, size, scale: float = 1.0) -> NDArray[np.float64]:
        """
        :return: i.i.d. zero mean Gaussian draws with standard deviation ``scale``
        """
        draws = self.__generator.normal(0.0, scale, size=size)
        self.position += int(np.size(draws))
        return draws

    def uniform(self, low: float, high: float, size) -> NDArray[np.float64]:
        """
        :return: i.i.d. draws uniform on [low, high)
        """
        draws = self.__generator.uniform(low, high, size=size)
        self.position += int(np.size(draws))
        return draws

    def subset(self, population: int, count: int) -> NDArray[np.int64]:
        """
        :return: ``count`` distinct indices drawn uniformly from range(population), sorted
        """
        draws = self.__generator.choice(population, size=count, replace=False)
        self.position += count
        return np.sort(draws)


@dataclass(frozen=True)
class LinearFit:
    """
    Least squares line ys ~ intercept + slope * xs
    """

    intercept: float
    slope: float
    residual_norm: float

    def at(self, x: float) -> float:
        """
        :return: the fitted line evaluated at x
        :rtype: float
        """
        return self.intercept + self.slope * x


def dense(operand) -> Matrix:
    """
    Returns the dense matrix behind an operand

    Accepts a raw array or any of the package's matrix wrappers (anything carrying a
    ``matrix`` attribute) and checks the Matrix invariants.

    :raises DimensionError: if the operand is not a non-empty 2-D array
    :raises DomainError: if an entry is NaN or infinite
    """
    values = np.asarray(getattr(operand, "matrix", operand), dtype=np.float64)

    if values.ndim != 2 or values.size == 0:
        raise DimensionError(f"expected a non-empty matrix, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DomainError("matrix entries must be finite")

    return values


def rademacher_matrix(
    rows: int, cols: int, rng: RngStream, column_normalize: bool = False
) -> Matrix:
    """
    Draws a matrix with i.i.d. entries uniform on {+1, -1}

    :param column_normalize: divide every entry by sqrt(rows) so each column has unit norm
    :raises DimensionError: if rows or cols is below 1
    """
    if rows < 1 or cols < 1:
        raise DimensionError(f"cannot draw a {rows}x{cols} matrix")

    values = rng.signs((rows, cols))
    if column_normalize:
        values /= np.sqrt(rows)

    return values


def spectral_top(
    operand,
    rng: RngStream | None = None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> float:
    """
    Computes the largest eigenvalue of AᵀA by power iteration

    The start vector is all ones plus a tiny seeded perturbation, so a start orthogonal to the
    top eigenvector is practically impossible. Iteration stops once the Rayleigh quotient
    changes by less than ``tol`` relative to its value.

    :param operand: The matrix A (any shape)
    :param rng: Stream for the start perturbation; a fixed default stream is used when omitted
    :raises ConvergenceError: if the tolerance is not met within ``max_iter`` iterations
    :return: λ_max(AᵀA)
    :rtype: float
    """
    a = dense(operand)
    rng = rng if rng is not None else RngStream(0)

    v = np.ones(a.shape[1]) + 1e-6 * rng.normal(a.shape[1])
    v /= np.linalg.norm(v)

    rho = 0.0
    for it in range(1, max_iter + 1):
        w = a.T @ (a @ v)
        rho_new = float(v @ w)
        w_norm = np.linalg.norm(w)

        if w_norm == 0.0:
            # v lies in the null space; only possible for A = 0 given the perturbed start
            return 0.0

        v = w / w_norm

        if abs(rho_new - rho) <= tol * abs(rho_new):
            logger.debug("power iteration converged in %d iterations: %.12g", it, rho_new)
            return rho_new

        rho = rho_new

    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        last_iterate=v,
        diagnostics={"rayleigh_quotient": rho},
    )


def polynomial_fit(
    xs: ArrayLike, ys: ArrayLike, degree: int = 1
) -> tuple[NDArray[np.float64], float]:
    """
    Ordinary least squares polynomial fit

    :return: coefficients ordered from the constant term up, and the Euclidean norm of the
             residual ys - p(xs)
    :raises DimensionError: if xs and ys differ in length or hold too few points
    :raises SingularityError: if xs has fewer distinct values than the fit needs
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)

    if x.ndim != 1 or x.shape != y.shape:
        raise DimensionError("xs and ys must be 1-D and of equal length")
    if degree < 1:
        raise DomainError("degree must be at least 1")
    if x.size < degree + 1:
        raise DimensionError(f"a degree {degree} fit needs at least {degree + 1} points")
    if np.unique(x).size < degree + 1:
        raise SingularityError("xs does not hold enough distinct values for the fit")

    design = np.vander(x, degree + 1, increasing=True)
    coefficients, *_ = linalg.lstsq(design, y)
    residual = float(np.linalg.norm(y - design @ coefficients))

    return coefficients, residual


def linear_fit(xs: ArrayLike, ys: ArrayLike) -> LinearFit:
    """
    Ordinary least squares line minimizing Σ(ys - a - b·xs)²

    :raises SingularityError: if every x is identical
    """
    coefficients, residual = polynomial_fit(xs, ys, degree=1)
    return LinearFit(
        intercept=float(coefficients[0]),
        slope=float(coefficients[1]),
        residual_norm=residual,
    )


def trace_inverse_gram(
    operand, support: Iterable[int] | str = "all", pseudo: bool = True
) -> float:
    """
    Returns trace{(A_SᵀA_S)⁻¹} for the columns S of A

    With ``pseudo`` the pseudo-inverse is used: gram eigenvalues below 1e-10 times the
    largest contribute nothing. Without it a rank deficient gram is an error.

    :param support: column indices, or "all"
    :raises DomainError: if the support is empty
    :raises DimensionError: if an index falls outside the columns of A
    :raises SingularityError: if the gram is rank deficient and ``pseudo`` is False
    """
    a = dense(operand)

    if isinstance(support, str):
        if support != "all":
            raise DomainError(f'support must be an index set or "all", got "{support}"')
        columns = a
    else:
        indices = np.unique(np.fromiter(support, dtype=np.int64))
        if indices.size == 0:
            raise DomainError("support must not be empty")
        if indices[0] < 0 or indices[-1] >= a.shape[1]:
            raise DimensionError(f"support index out of range for {a.shape[1]} columns")
        columns = a[:, indices]

    eigenvalues = linalg.eigh(columns.T @ columns, eigvals_only=True)
    top = float(eigenvalues[-1])
    kept = eigenvalues[eigenvalues > PSEUDO_INVERSE_CUTOFF * top] if top > 0 else eigenvalues[:0]

    if not pseudo and kept.size != eigenvalues.size:
        raise SingularityError("gram matrix is singular")

    return float(np.sum(1.0 / kept))
