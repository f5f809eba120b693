import math

import numpy as np
import pytest

from sparsechan import (
    DegenerateInputError,
    DimensionError,
    DivergenceError,
    DomainError,
    EigFit,
    Estimate,
    HNConfig,
    RngStream,
    SingularityError,
    SparseChannel,
    ThresholdModel,
    build_convolution,
    calibrate_threshold_model,
    dantzig_selector,
    effective,
    gen_measurement,
    gen_training,
    hn_recover,
    hn_threshold,
    matching_pursuit,
    max_energy,
    pea_cs,
    sliding_correlator,
    spectral_top,
    threshold_set,
)
from sparsechan.estimators import select_threshold_index

REFERENCE_FIT = EigFit.linear(18.81, -0.064, 50, 150, 200)


def orthonormal(rows, cols, seed=0):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(rows, cols)))
    return q


def sparse_taps(n, taps):
    h = np.zeros(n)
    for index, value in taps.items():
        h[index] = value
    return h


# region initial estimates


def test_sliding_correlator_on_orthogonal_basis():
    h = sparse_taps(5, {1: 0.5, 3: -0.7})
    basis = 2.0 * orthonormal(9, 5)
    np.testing.assert_allclose(sliding_correlator(basis, basis @ h).h_hat, h, atol=1e-12)


def test_sliding_correlator_of_silence():
    basis = build_convolution(gen_training(10, RngStream(0)), 4)
    np.testing.assert_array_equal(sliding_correlator(basis, np.zeros(13)).h_hat, np.zeros(4))


def test_sliding_correlator_hand_case():
    basis = build_convolution(gen_training(4, RngStream(3)), 2, normalize=False)
    r = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    expected = [basis.matrix[:, n] @ r / 4.0 for n in range(2)]
    np.testing.assert_allclose(sliding_correlator(basis, r).h_hat, expected)


def test_sliding_correlator_zero_column():
    with pytest.raises(SingularityError):
        sliding_correlator(np.array([[1.0, 0.0], [1.0, 0.0]]), np.ones(2))


def test_max_energy():
    a = orthonormal(12, 6, seed=1)
    h = sparse_taps(6, {0: 1.0, 4: -0.3})
    np.testing.assert_allclose(max_energy(a, a @ h).h_hat, h, atol=1e-10)
    np.testing.assert_array_equal(max_energy(a, np.zeros(12)).h_hat, np.zeros(6))

    hand = max_energy(np.array([[1.0, 2.0], [3.0, 4.0]]), [1.0, -1.0])
    np.testing.assert_allclose(hand.h_hat, [-2.0, -2.0])


def test_max_energy_dimension_mismatch():
    with pytest.raises(DimensionError):
        max_energy(np.eye(3), np.zeros(2))


@pytest.mark.parametrize("seed, tap", [(20, 3), (21, 11), (22, 17)])
def test_initial_estimates_peak_on_the_same_tap(seed, tap):
    rng = RngStream(seed)
    basis = build_convolution(gen_training(60, rng), 20)
    sensing = effective(gen_measurement(70, basis.rows, rng), basis)
    y = sensing.matrix @ sparse_taps(20, {tap: -0.8})

    sliding = sliding_correlator(sensing, y).h_hat
    energy = max_energy(sensing, y).h_hat
    assert np.argmax(np.abs(sliding)) == np.argmax(np.abs(energy)) == tap


# endregion

# region threshold


def test_calibrated_reference_model():
    model = calibrate_threshold_model(200, 100, REFERENCE_FIT)
    assert model.b == pytest.approx(1.4397, abs=1e-3)
    assert model.a == pytest.approx(0.0707, abs=1e-4)
    assert hn_threshold(0.0, model) == pytest.approx(0.1018, abs=1e-3)


def test_raw_threshold_equals_model():
    model = calibrate_threshold_model(200, 100, REFERENCE_FIT)
    lam = REFERENCE_FIT.at(100)
    for sigma in (0.0, 0.05, 0.3):
        raw = hn_threshold(sigma, M=200, N=100, lam=lam)
        assert raw == pytest.approx(model.g(sigma), rel=1e-12)


def test_square_root_exponent():
    lam = REFERENCE_FIT.at(100)
    linear = hn_threshold(0.1, M=200, N=100, lam=lam)
    rooted = hn_threshold(0.1, M=200, N=100, lam=lam, lambda_exponent=0.5)
    assert rooted == pytest.approx(linear * math.sqrt(lam))


def test_raw_threshold_with_measured_eigenvalue():
    phi = gen_measurement(50, 299, RngStream(12))
    measured = hn_threshold(0.1, M=200, N=100, lam=spectral_top(phi))
    model = calibrate_threshold_model(200, 100, REFERENCE_FIT)
    assert measured == pytest.approx(model.g(0.1), rel=0.1)


def test_threshold_domain():
    with pytest.raises(DomainError):
        hn_threshold(0.1, M=200, N=100, lam=0.0)
    with pytest.raises(DomainError):
        hn_threshold(-0.1, M=200, N=100, lam=1.0)
    with pytest.raises(DomainError):
        calibrate_threshold_model(200, 100, EigFit.linear(1.0, -1.0, 50, 150, 200))


def test_hand_threshold_set():
    initial = Estimate(h_hat=[0.2, -0.9, 0.0], estimator_id="max_energy")
    ts = threshold_set(initial, ThresholdModel(1.0, 1.0, 4, 3), (0.0, 2.0), 3)
    np.testing.assert_allclose(ts.levels, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(ts.thresholds, [0.1, 0.4, 0.9])
    assert ts.delta == pytest.approx(0.3)


def test_constant_model_gives_uniform_grid():
    initial = Estimate(h_hat=np.linspace(-1.0, 0.5, 7), estimator_id="max_energy")
    ts = threshold_set(initial, ThresholdModel(0.5, 2.0, 4, 3), (0.2, 0.2), 10)
    np.testing.assert_allclose(ts.thresholds, np.arange(1, 11) * 0.1)


def test_reference_threshold_set_is_increasing():
    model = calibrate_threshold_model(200, 100, REFERENCE_FIT)
    initial = Estimate(h_hat=np.random.default_rng(3).normal(size=100), estimator_id="max_energy")
    ts = threshold_set(initial, model, (0.01, 0.1), 21)
    assert len(ts) == 21
    assert np.all(np.diff(ts.thresholds) > 0)
    assert ts.thresholds[-1] == pytest.approx(np.max(np.abs(initial.h_hat)))


def test_threshold_set_of_zero_estimate():
    with pytest.raises(DegenerateInputError):
        threshold_set(
            Estimate(h_hat=np.zeros(4), estimator_id="max_energy"),
            ThresholdModel(1.0, 1.0, 4, 3),
            (0.0, 1.0),
            5,
        )


# endregion

# region hn_recover


def test_recovers_single_tap_noiseless():
    a = orthonormal(8, 8, seed=4)
    h = sparse_taps(8, {5: 0.6})
    cfg = HNConfig(B=0.5, sigma=0.0, lam=spectral_top(a), max_iters=1000)
    estimate = hn_recover(a, a @ h, 1e-6, cfg)
    assert np.linalg.norm(estimate.h_hat - h) < 1e-6


def test_recovers_tall_system_with_tiny_threshold():
    a = np.random.default_rng(5).normal(size=(40, 8)) / math.sqrt(40)
    h = sparse_taps(8, {2: 0.9})
    cfg = HNConfig(B=1.0, sigma=0.0, lam=spectral_top(a), max_iters=5000, fixpoint_tol=1e-12)
    estimate = hn_recover(a, a @ h, 1e-6, cfg)
    assert np.linalg.norm(estimate.h_hat - h) < 1e-6


def test_zero_signal_is_a_fixed_point():
    a = orthonormal(6, 4)
    estimate = hn_recover(a, np.zeros(6), 0.1, HNConfig(B=1.0, sigma=0.0, lam=1.0))
    np.testing.assert_array_equal(estimate.h_hat, np.zeros(4))
    assert estimate.iterations_used == 1


def test_true_channel_is_a_fixed_point():
    rng = RngStream(7)
    basis = build_convolution(gen_training(30, rng), 10)
    a = gen_measurement(20, basis.rows, rng).matrix @ basis.matrix
    h = sparse_taps(10, {3: 0.8, 7: -0.5})

    cfg = HNConfig(B=0.2, sigma=0.0, lam=spectral_top(a))
    estimate = hn_recover(a, a @ h, 0.4, cfg, theta0=h)
    np.testing.assert_allclose(estimate.h_hat, h, atol=1e-12)
    assert estimate.iterations_used == 1


def test_divisor_scales_applied_threshold():
    a = orthonormal(4, 4)
    h = sparse_taps(4, {0: 0.3})
    plain = hn_recover(a, a @ h, 0.5, HNConfig(B=1.0, sigma=0.0, lam=1.0))
    divided = hn_recover(a, a @ h, 0.5, HNConfig(B=1.0, sigma=0.0, lam=1.0, P=2.0))
    assert not plain.h_hat.any()
    assert divided.h_hat[0] == pytest.approx(0.3)


def test_underestimated_lambda_diverges():
    a = np.random.default_rng(8).normal(size=(10, 10))
    cfg = HNConfig(B=1.0, sigma=0.0, lam=1e-3 * spectral_top(a), max_iters=10_000)
    with pytest.raises(DivergenceError):
        hn_recover(a, a @ np.ones(10), 1e-9, cfg)


@pytest.mark.parametrize("G, P", [(0.1, 1.0), (0.2, 2.0), (0.05, 4.6)])
def test_surviving_taps_clear_the_applied_threshold(G, P):
    a = np.random.default_rng(23).normal(size=(30, 10)) / math.sqrt(30)
    y = a @ sparse_taps(10, {2: 1.0, 7: -0.8}) + 0.05 * np.random.default_rng(24).normal(size=30)
    cfg = HNConfig(B=0.2, sigma=0.05, lam=spectral_top(a), P=P)

    theta = hn_recover(a, y, G, cfg).h_hat
    kept = theta[theta != 0.0]
    assert kept.size > 0
    assert np.all(np.abs(kept) >= G / P)


def test_threshold_above_first_step_keeps_nothing():
    a = np.random.default_rng(23).normal(size=(30, 10)) / math.sqrt(30)
    y = a @ sparse_taps(10, {2: 1.0, 7: -0.8})
    lam = spectral_top(a)
    first_step = float(np.max(np.abs(a.T @ y))) / lam
    cfg = HNConfig(B=0.2, sigma=0.0, lam=lam)

    # from zero the first iterate is Aᵀy/λ, so anything above its peak stays at zero
    assert not np.any(hn_recover(a, y, first_step * 1.01, cfg).h_hat)
    assert np.any(hn_recover(a, y, first_step * 0.99, cfg).h_hat)


def test_pure_gradient_residual_never_grows():
    a = np.random.default_rng(25).normal(size=(12, 20))
    y = np.random.default_rng(26).normal(size=12)
    lam = spectral_top(a)

    residuals = []
    for steps in range(1, 31):
        cfg = HNConfig(B=1.0, sigma=0.0, lam=lam, max_iters=steps, fixpoint_tol=1e-300)
        theta = hn_recover(a, y, 0.0, cfg).h_hat
        residuals.append(float(np.sum((y - a @ theta) ** 2)))

    assert np.all(np.diff(residuals) <= 1e-12 * residuals[0])
    assert residuals[-1] < residuals[0]


def test_hn_config():
    cfg = HNConfig(B=0.0707, sigma=0.0, lam=1.0)
    assert cfg.epsilon == pytest.approx(1.0 / (50.0 * 0.0707**2))
    with pytest.raises(DomainError):
        HNConfig(B=1.0, sigma=0.0, lam=0.0)
    with pytest.raises(DomainError):
        HNConfig(B=1.0, sigma=0.0, lam=1.0, P=0.0)


# endregion

# region PEA-CS


def test_selection_rule_hand_case():
    index, derivative, fallback = select_threshold_index([5.0, 1.2, 1.1])
    assert index == 3
    assert not fallback
    assert math.isnan(derivative[0])
    np.testing.assert_allclose(derivative[1:], [-3.8, -0.1])


def test_selection_ties_go_to_smaller_threshold():
    index, _, _ = select_threshold_index([3.0, 2.0, 1.0, 0.0])
    assert index == 2


def test_selection_skips_zero_differences():
    index, _, fallback = select_threshold_index([1.0, 1.0, 0.5, 0.2])
    assert index == 4
    assert not fallback


def test_identical_estimates_fall_back_to_smallest_threshold():
    a = orthonormal(8, 8, seed=9)
    h = sparse_taps(8, {1: 0.5, 6: -0.5})
    y = a @ h
    cfg = HNConfig(B=0.5, sigma=0.0, lam=spectral_top(a))
    initial = Estimate(h_hat=np.full(8, 3e-3), estimator_id="max_energy")
    ts = threshold_set(initial, ThresholdModel(1.0, 1.0, 8, 8), (0.0, 0.0), 3)

    estimate, trace = pea_cs(a, y, ts, cfg)
    assert trace.fallback
    assert trace.chosen_index == 1
    np.testing.assert_array_equal(estimate.h_hat, hn_recover(a, y, ts.thresholds[0], cfg).h_hat)
    assert estimate.note == "t_index=1"


def noisy_pea_problem():
    rng = RngStream(10)
    basis = build_convolution(gen_training(60, rng), 20)
    phi = gen_measurement(15, basis.rows, rng)
    a = phi.matrix @ basis.matrix
    y = a @ sparse_taps(20, {2: 0.9, 11: -0.6}) + 0.01 * np.random.default_rng(1).normal(size=15)

    model = calibrate_threshold_model(60, 20, EigFit.linear(10.0, -0.1, 10, 30, 60))
    ts = threshold_set(max_energy(a, y), model, (0.005, 0.05), 20)
    cfg = HNConfig(B=1 / math.sqrt(60), sigma=0.01, lam=spectral_top(a))
    return a, y, ts, cfg


def test_pea_cs_returns_the_recovery_at_the_chosen_threshold():
    a, y, ts, cfg = noisy_pea_problem()
    estimate, trace = pea_cs(a, y, ts, HNConfig(B=cfg.B, sigma=cfg.sigma, lam=cfg.lam, P=3.0))

    assert not trace.fallback
    assert trace.derivative[trace.chosen_index - 1] != 0.0
    direct = hn_recover(a, y, ts.thresholds[trace.chosen_index - 1], cfg)
    np.testing.assert_array_equal(estimate.h_hat, direct.h_hat)
    assert estimate.iterations_used == direct.iterations_used


def test_pea_cs_trace_does_not_depend_on_workers():
    a, y, ts, cfg = noisy_pea_problem()

    serial, serial_trace = pea_cs(a, y, ts, cfg)
    threaded, threaded_trace = pea_cs(a, y, ts, cfg, workers=4)
    np.testing.assert_array_equal(serial.h_hat, threaded.h_hat)
    np.testing.assert_array_equal(serial_trace.errors, threaded_trace.errors)
    assert serial_trace.chosen_index == threaded_trace.chosen_index
    assert 1 <= serial_trace.chosen_index <= 20


# endregion

# region matching pursuit


def test_single_atom():
    basis = build_convolution(gen_training(50, RngStream(11)), 10)
    estimate = matching_pursuit(basis, 3.0 * basis.matrix[:, 4], 1)
    np.testing.assert_allclose(estimate.h_hat, sparse_taps(10, {4: 3.0}), atol=1e-12)


def test_orthonormal_dictionary():
    a = orthonormal(10, 6, seed=12)
    y = 2.0 * a[:, 1] + 1.0 * a[:, 4]
    np.testing.assert_allclose(matching_pursuit(a, y, 2).h_hat, sparse_taps(6, {1: 2.0, 4: 1.0}), atol=1e-12)


@pytest.mark.parametrize("S", [2, 3, 4, 6])
def test_spare_iterations_on_orthonormal_columns(S):
    a = orthonormal(10, 6, seed=27)
    h = sparse_taps(6, {0: -0.7, 3: 1.2})
    np.testing.assert_allclose(matching_pursuit(a, a @ h, S).h_hat, h, atol=1e-10)


def test_silence():
    a = orthonormal(10, 6)
    np.testing.assert_array_equal(matching_pursuit(a, np.zeros(10), 3).h_hat, np.zeros(6))


def test_refinement_reaches_exact_taps():
    rng = RngStream(13)
    basis = build_convolution(gen_training(200, rng), 100)
    h = SparseChannel(100, [7, 40, 81], [0.95, -0.9, 0.92])
    r = basis.matrix @ h.taps

    coarse = matching_pursuit(basis, r, 3)
    refined = matching_pursuit(basis, r, 3, refine_iters=500)
    assert np.sum((refined.h_hat - h.taps) ** 2) < 1e-8
    assert np.sum((refined.h_hat - h.taps) ** 2) <= np.sum((coarse.h_hat - h.taps) ** 2)
    np.testing.assert_array_equal(np.flatnonzero(refined.h_hat), [7, 40, 81])


def test_mp_domain():
    with pytest.raises(DomainError):
        matching_pursuit(np.eye(3), np.ones(3), 0)


# endregion

# region Dantzig selector


def test_zero_signal():
    estimate = dantzig_selector(orthonormal(6, 4), np.zeros(6), 0.24)
    np.testing.assert_allclose(estimate.h_hat, np.zeros(4), atol=1e-6)


def test_soft_threshold_on_identity():
    estimate = dantzig_selector(np.eye(2), [1.0, 0.0], 0.5)
    np.testing.assert_allclose(estimate.h_hat, [0.5, 0.0], atol=1e-5)


def grid_search_l1(a, y, gamma, coarse=5e-3, fine=5e-5, window=1e-2):
    """
    Smallest ‖θ‖₁ over feasible points of a coarse grid, refined around the best coarse point
    """
    gram, correlation = a.T @ a, a.T @ y
    n = a.shape[1]
    radius = float(np.sum(np.abs(np.linalg.solve(gram, correlation)))) + coarse

    def best_on(center, half_width, step):
        axis = np.arange(-half_width, half_width + step / 2, step)
        points = center + np.stack(np.meshgrid(*[axis] * n, indexing="ij"), axis=-1).reshape(-1, n)
        feasible = np.max(np.abs(points @ gram - correlation), axis=1) <= gamma
        norms = np.where(feasible, np.sum(np.abs(points), axis=1), np.inf)
        best = int(np.argmin(norms))
        return points[best], float(norms[best])

    center, _ = best_on(np.zeros(n), radius, coarse)
    return best_on(center, window, fine)[1]


@pytest.mark.parametrize(
    "a, y, gamma",
    [
        (np.eye(2), [1.0, 0.0], 0.5),
        (np.eye(2), [1.0, -0.8], 0.3),
        (np.array([[1.0, 0.3], [0.0, 1.0]]), [0.8, 0.4], 0.1),
        (np.array([[1.0, 0.2], [0.4, -1.0], [0.1, 0.5]]), [0.5, 0.9, -0.2], 0.05),
        (np.array([[0.6], [0.8], [0.0]]), [1.0, 0.5, 2.0], 0.2),
    ],
)
def test_dantzig_matches_grid_search(a, y, gamma):
    y = np.asarray(y)
    theta = dantzig_selector(a, y, gamma).h_hat
    l1 = float(np.sum(np.abs(theta)))
    oracle = grid_search_l1(a, y, gamma)

    assert l1 <= oracle + 1e-4
    assert l1 == pytest.approx(oracle, abs=1e-3)


def test_constraint_holds():
    a = np.random.default_rng(14).normal(size=(15, 30)) / math.sqrt(15)
    y = a @ sparse_taps(30, {3: 1.0, 17: -0.7}) + 0.05 * np.random.default_rng(15).normal(size=15)
    theta = dantzig_selector(a, y, 0.1).h_hat
    assert np.max(np.abs(a.T @ (a @ theta - y))) <= 0.1 + 1e-6


def test_dantzig_is_deterministic():
    a = np.random.default_rng(16).normal(size=(10, 20))
    y = np.random.default_rng(17).normal(size=10)
    np.testing.assert_array_equal(dantzig_selector(a, y, 0.3).h_hat, dantzig_selector(a, y, 0.3).h_hat)


def test_negative_gamma():
    with pytest.raises(DomainError):
        dantzig_selector(np.eye(2), [1.0, 0.0], -0.1)


# endregion
