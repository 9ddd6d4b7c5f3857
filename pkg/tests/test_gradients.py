import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from healthbf._validation import InvalidArgumentError
from healthbf.gradients import (
    fd_oracle,
    grad_comm,
    grad_lagrangian_smooth,
    grad_power_term,
    grad_radar,
    relative_error,
    smooth_lagrangian,
)
from healthbf.metrics import radar_mi, user_se
from healthbf.scenario import SystemConfig, radar_covariance, random_scene, sample_channel
from healthbf.solver import DualState

from conftest import crandn

HALF_LN2 = 1 / (2 * np.log(2))


def small_config(rng, n_tx=6, m=3, k=2):
    fr = rng.dirichlet(np.ones(m + 1))
    return SystemConfig(n_tx=n_tx, n_rx=n_tx, n_users=m, n_targets=k, frame_len=n_tx,
                        bw_fraction_radar=float(fr[0]),
                        bw_fractions_users=tuple(fr[1:] / fr[1:].sum() * (1 - fr[0])),
                        rate_min=(0.01,) * m, rate_max=(20.0,) * m)


def instance(seed, n_tx=6, m=3, k=2):
    rng = np.random.default_rng(seed)
    cfg = small_config(rng, n_tx, m, k)
    H = sample_channel(rng, n_tx, m)
    R = radar_covariance(random_scene(rng, k), n_tx, cfg.spacing, cfg.wavelength)
    W = crandn(rng, n_tx, m) / 2
    duals = DualState(rng.uniform(0, 0.1, m), rng.uniform(0, 0.1, m), rng.uniform(0, 0.1))
    return cfg, H, R, W, duals


class TestOracle:
    def test_power_functional(self, rng):
        W = crandn(rng, 3, 2)
        np.testing.assert_allclose(fd_oracle(lambda X: np.sum(np.abs(X) ** 2), W), W, atol=1e-6)

    def test_constant(self, rng):
        np.testing.assert_allclose(fd_oracle(lambda X: 3.0, crandn(rng, 2, 2)), 0, atol=1e-9)

    def test_real_part_convention(self, rng):
        expected = np.zeros((2, 3), complex)
        expected[0, 0] = 0.5
        np.testing.assert_allclose(fd_oracle(lambda X: X[0, 0].real, crandn(rng, 2, 3)),
                                   expected, atol=1e-9)

    def test_non_finite_functional(self):
        with pytest.raises(FloatingPointError):
            fd_oracle(lambda X: np.nan, np.ones((1, 1)))


class TestClosedForms:
    def test_radar_scalar(self):
        assert grad_radar([[1.0]], [[1.0]], 1.0, 1.0)[0, 0] == pytest.approx(HALF_LN2)

    def test_comm_scalar(self):
        assert grad_comm([[1.0]], [[1.0]], 1.0, [1.0])[0, 0] == pytest.approx(HALF_LN2)

    def test_zero_cases(self, rng):
        W, H = crandn(rng, 4, 2), crandn(rng, 4, 2)
        np.testing.assert_array_equal(grad_radar(np.zeros((4, 2)), np.eye(4), 0.1, 1.0), 0)
        np.testing.assert_array_equal(grad_radar(W, np.zeros((4, 4)), 0.1, 1.0), 0)
        np.testing.assert_array_equal(grad_comm(W, H, 0.1, [0, 0]), 0)
        np.testing.assert_array_equal(grad_comm(np.zeros((4, 2)), H, 0.1, [1, 1]), 0)

    def test_power_term(self, rng):
        W = crandn(rng, 3, 3)
        np.testing.assert_array_equal(grad_power_term(W, 0.0), 0)
        np.testing.assert_array_equal(grad_power_term(np.eye(2), 1.0), -np.eye(2))
        np.testing.assert_allclose(grad_power_term(W, 0.4), 2 * grad_power_term(W, 0.2))

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            grad_comm(np.ones((2, 1)), np.ones((2, 1)), 0.0, [1.0])
        with pytest.raises(InvalidArgumentError):
            grad_radar(np.ones((2, 1)), -np.eye(2), 1.0, 1.0)


class TestAssembly:
    def test_zero_duals_is_sum_of_parts(self):
        cfg, H, R, W, _ = instance(3)
        zero = DualState.constant(3)
        expected = (grad_radar(W, R, cfg.sigma2_r, cfg.bw_fraction_radar)
                    + grad_comm(W, H, cfg.sigma2_c, cfg.bw_fractions_users))
        np.testing.assert_allclose(grad_lagrangian_smooth(W, R, H, zero, cfg), expected)

    def test_no_weights_no_gradient(self):
        cfg, H, R, W, _ = instance(4)
        cfg = cfg.replace(bw_fraction_radar=0.0, bw_fractions_users=(1 / 3,) * 3)
        # lambda2 = rho_j cancels every rate weight
        duals = DualState(np.zeros(3), np.full(3, 1 / 3), 0.0)
        np.testing.assert_allclose(grad_lagrangian_smooth(W, R, H, duals, cfg), 0, atol=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_lagrangian_matches_oracle(seed):
    cfg, H, R, W, duals = instance(seed)
    g = grad_lagrangian_smooth(W, R, H, duals, cfg)
    num = fd_oracle(lambda X: smooth_lagrangian(X, R, H, duals, cfg), W)
    assert relative_error(g, num) <= 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_each_term_matches_oracle(seed):
    cfg, H, R, W, duals = instance(100 + seed)
    w = np.random.default_rng(seed).uniform(-1, 1, 3)
    radar = fd_oracle(lambda X: 0.7 * radar_mi(R, X, 0.3), W)
    assert relative_error(grad_radar(W, R, 0.3, 0.7), radar) <= 1e-5
    comm = fd_oracle(lambda X: float(np.dot(w, user_se(H, X, 0.2))), W)
    assert relative_error(grad_comm(W, H, 0.2, w), comm) <= 1e-5
    hybrid = fd_oracle(lambda X: smooth_lagrangian(X, R, H, duals, cfg, power_scale=2.5), W)
    assert relative_error(grad_lagrangian_smooth(W, R, H, duals, cfg, 2.5), hybrid) <= 1e-5


@given(st.integers(0, 10_000))
def test_ascent_property(seed):
    cfg, H, R, W, duals = instance(seed)
    g = grad_lagrangian_smooth(W, R, H, duals, cfg)
    assert np.linalg.norm(g) > 1e-8
    f0 = smooth_lagrangian(W, R, H, duals, cfg)
    assert any(smooth_lagrangian(W + eta * g, R, H, duals, cfg) > f0
               for eta in 10.0 ** -np.arange(1, 9))


@given(st.integers(0, 10_000), st.integers(0, 2))
def test_comm_superposition(seed, m):
    rng = np.random.default_rng(seed)
    H, W = crandn(rng, 5, 3), crandn(rng, 5, 3)
    e = np.zeros(3)
    e[m] = 1.0
    single = grad_comm(W, H, 0.1, e)
    total = sum(grad_comm(W, H, 0.1, np.eye(3)[j]) for j in range(3))
    np.testing.assert_allclose(total, grad_comm(W, H, 0.1, np.ones(3)), atol=1e-10)
    num = fd_oracle(lambda X: user_se(H, X, 0.1)[m], W)
    assert relative_error(single, num) <= 1e-5
