import numpy as np
import pytest

from sparsechan import (
    ConvergenceError,
    DimensionError,
    DomainError,
    RngStream,
    SingularityError,
    build_convolution,
    gen_training,
    linear_fit,
    polynomial_fit,
    rademacher_matrix,
    spectral_top,
    trace_inverse_gram,
)


# region RngStream


def test_same_seed_same_draws():
    a, b = RngStream(42), RngStream(42)
    np.testing.assert_array_equal(a.signs(100), b.signs(100))
    np.testing.assert_array_equal(a.normal(10), b.normal(10))


def test_fork_ignores_parent_position():
    parent = RngStream(7)
    before = parent.fork(3, 1).normal(5)
    parent.normal(1000)
    after = parent.fork(3, 1).normal(5)
    np.testing.assert_array_equal(before, after)


def test_forks_with_different_keys_differ():
    parent = RngStream(7)
    assert not np.array_equal(parent.fork(0).normal(20), parent.fork(1).normal(20))


def test_position_counts_draws():
    rng = RngStream(1)
    rng.signs((3, 4))
    rng.normal(5)
    assert rng.position == 17


def test_subset_is_distinct_and_sorted():
    picks = RngStream(5).subset(100, 10)
    assert picks.size == 10
    assert np.all(np.diff(picks) > 0)


# endregion

# region rademacher_matrix


def test_single_draw_is_sign():
    value = rademacher_matrix(1, 1, RngStream(0), column_normalize=False)
    assert value.shape == (1, 1)
    assert abs(value[0, 0]) == 1.0


@pytest.mark.parametrize("shape", [(50, 299), (4, 4)])
def test_normalized_columns_have_unit_norm(shape):
    values = rademacher_matrix(*shape, RngStream(11), column_normalize=True)
    np.testing.assert_allclose(np.linalg.norm(values, axis=0), 1.0, atol=1e-12)


def test_zero_dimension_rejected():
    with pytest.raises(DimensionError):
        rademacher_matrix(0, 3, RngStream(0))
    with pytest.raises(DimensionError):
        rademacher_matrix(3, 0, RngStream(0))


# endregion

# region spectral_top


def test_identity_top_eigenvalue():
    assert spectral_top(np.eye(2)) == pytest.approx(1.0, abs=1e-12)


def test_diagonal_top_eigenvalue():
    assert spectral_top(np.diag([2.0, 3.0])) == pytest.approx(9.0, rel=1e-10)


def test_zero_matrix():
    assert spectral_top(np.zeros((3, 2))) == 0.0


def test_normalized_rademacher_matches_fitted_line():
    phi = rademacher_matrix(50, 299, RngStream(3), column_normalize=True)
    expected = 18.81 - 0.064 * 100
    assert spectral_top(phi) == pytest.approx(expected, rel=0.15)


@pytest.mark.parametrize("seed", range(20))
def test_agrees_with_dense_eigensolver(seed):
    gen = np.random.default_rng(seed)
    rows, cols = gen.integers(1, 6, size=2)
    a = gen.normal(size=(rows, cols))

    expected = np.linalg.eigvalsh(a.T @ a)[-1]
    assert spectral_top(a, rng=RngStream(seed)) == pytest.approx(expected, abs=1e-8 * max(1.0, expected))


def test_rayleigh_quotient_lower_bound():
    gen = np.random.default_rng(99)
    a = gen.normal(size=(7, 12))
    top = spectral_top(a)
    for _ in range(10):
        v = gen.normal(size=12)
        assert top >= (np.linalg.norm(a @ v) / np.linalg.norm(v)) ** 2 - 1e-12


def test_non_convergence_carries_last_iterate():
    # the quotient still moves by about 2% per step: 0.905, 0.925, 0.943
    with pytest.raises(ConvergenceError) as info:
        spectral_top(np.diag([1.0, 0.9]), max_iter=3)
    assert info.value.last_iterate is not None
    assert info.value.diagnostics["rayleigh_quotient"] == pytest.approx(0.9428, abs=1e-3)


def test_single_step_never_converges():
    with pytest.raises(ConvergenceError):
        spectral_top(np.eye(3), max_iter=1)


def test_nearly_equal_top_eigenvalues():
    # converges before the vector settles, but the quotient lies between the two eigenvalues
    assert spectral_top(np.diag([1.0, 0.999999])) == pytest.approx(1.0, rel=1e-5)


# endregion

# region linear_fit


def test_two_point_line():
    fit = linear_fit([0, 1], [1, 3])
    assert fit.intercept == pytest.approx(1.0)
    assert fit.slope == pytest.approx(2.0)


def test_exact_linear_data_has_zero_residual():
    fit = linear_fit([1, 2, 3], [2, 4, 6])
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert fit.slope == pytest.approx(2.0)
    assert fit.residual_norm == pytest.approx(0.0, abs=1e-12)


def test_normal_equations():
    # n=3, Σx=3, Σx²=5, Σy=2, Σxy=3
    fit = linear_fit([0, 1, 2], [0, 1, 1])
    assert fit.slope == pytest.approx(0.5)
    assert fit.intercept == pytest.approx(1.0 / 6.0)
    assert fit.residual_norm == pytest.approx(np.sqrt(1 / 36 + 1 / 9 + 1 / 36))


def test_affine_data_any_size():
    xs = np.linspace(-3, 8, 17)
    assert linear_fit(xs, 0.25 - 1.5 * xs).residual_norm == pytest.approx(0.0, abs=1e-10)


def test_degenerate_xs():
    with pytest.raises(SingularityError):
        linear_fit([2, 2, 2], [1, 2, 3])


def test_length_mismatch():
    with pytest.raises(DimensionError):
        linear_fit([0, 1, 2], [1, 2])


def test_quadratic_fit_recovers_coefficients():
    xs = np.arange(6.0)
    coefficients, residual = polynomial_fit(xs, 1.0 - 2.0 * xs + 0.5 * xs**2, degree=2)
    np.testing.assert_allclose(coefficients, [1.0, -2.0, 0.5], atol=1e-10)
    assert residual == pytest.approx(0.0, abs=1e-10)


# endregion

# region trace_inverse_gram


def test_orthonormal_columns():
    q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(6, 4)))
    assert trace_inverse_gram(q, "all") == pytest.approx(4.0)


def test_single_column_of_diagonal():
    a = np.diag([2.0, 4.0])
    assert trace_inverse_gram(a, [0]) == pytest.approx(1.0 / 4.0)
    assert trace_inverse_gram(a, [1]) == pytest.approx(1.0 / 16.0)


def test_unit_column_of_normalized_basis():
    basis = build_convolution(gen_training(20, RngStream(2)), 5, normalize=True)
    assert trace_inverse_gram(basis.matrix, [3]) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_matches_reciprocal_eigenvalues(seed):
    gen = np.random.default_rng(seed)
    a = gen.normal(size=(9, 6))
    support = sorted(gen.choice(6, size=gen.integers(1, 5), replace=False))
    gram = a[:, support].T @ a[:, support]
    expected = np.sum(1.0 / np.linalg.eigvalsh(gram))
    assert trace_inverse_gram(a, support) == pytest.approx(expected, rel=1e-10)


def test_rank_deficient_uses_pseudo_inverse():
    a = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert trace_inverse_gram(a, "all") == pytest.approx(0.5)
    with pytest.raises(SingularityError):
        trace_inverse_gram(a, "all", pseudo=False)


def test_empty_support():
    with pytest.raises(DomainError):
        trace_inverse_gram(np.eye(3), [])


def test_support_out_of_range():
    with pytest.raises(DimensionError):
        trace_inverse_gram(np.eye(3), [3])


# endregion
