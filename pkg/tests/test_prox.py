import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from healthbf._validation import InvalidArgumentError
from healthbf.prox import (
    elementwise_thresholds,
    prox_elementwise,
    prox_group_rows,
    row_thresholds,
    soft_threshold_entry,
)

from conftest import crandn

seeds = st.integers(0, 2**32 - 1)


class TestSoftThreshold:
    def test_shrinks_large(self):
        assert soft_threshold_entry(1.2, 0.5) == pytest.approx(0.7)

    def test_kills_small(self):
        assert soft_threshold_entry(0.3, 0.5) == 0

    def test_complex(self):
        out = soft_threshold_entry(0.5 + 0.5j, 0.20711)
        assert out == pytest.approx(0.35355 + 0.35355j, abs=1e-5)
        grid = np.linspace(0, 1, 100_001) * (0.5 + 0.5j)
        obj = 0.20711 * np.abs(grid) + np.abs(grid - (0.5 + 0.5j)) ** 2 / 2
        assert abs(grid[np.argmin(obj)] - out) < 1e-4

    def test_zero_input_and_negative_threshold(self):
        assert soft_threshold_entry(0.0, 1.0) == 0
        with pytest.raises(InvalidArgumentError):
            soft_threshold_entry(1.0, -0.1)


class TestProxElementwise:
    def test_identity_at_zero_threshold(self, rng):
        W = crandn(rng, 4, 3)
        np.testing.assert_array_equal(prox_elementwise(W, np.zeros((4, 3))), W)

    def test_annihilates(self, rng):
        W = crandn(rng, 4, 3)
        np.testing.assert_array_equal(prox_elementwise(W, np.full((4, 3), 10.0)), 0)

    def test_separable(self, rng):
        W, K = crandn(rng, 3, 2), rng.uniform(0, 1.5, (3, 2))
        out = prox_elementwise(W, K)
        for idx in np.ndindex(W.shape):
            assert out[idx] == soft_threshold_entry(W[idx], K[idx])

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            prox_elementwise(np.ones((2, 2)), np.ones((2, 3)))

    def test_threshold_plan(self):
        beta = np.array([[1.0, 0.25]])
        np.testing.assert_allclose(elementwise_thresholds(beta, 2.0, 0.1), [[0.0, 0.15]])


class TestProxGroupRows:
    def test_row_scaling(self):
        np.testing.assert_allclose(prox_group_rows([[3.0, 4.0]], [1.0]), [[2.4, 3.2]])

    def test_small_row_vanishes(self):
        np.testing.assert_array_equal(prox_group_rows([[0.3, 0.4]], [1.0]), 0)

    def test_zero_thresholds(self, rng):
        W = crandn(rng, 3, 2)
        np.testing.assert_array_equal(prox_group_rows(W, np.zeros(3)), W)

    def test_zero_row_stays_zero(self):
        np.testing.assert_array_equal(prox_group_rows(np.zeros((2, 2)), [0.0, 1.0]), 0)

    def test_plan(self):
        np.testing.assert_allclose(row_thresholds([1.0, 0.5], 2.0, 0.1, 0.5, 5.0), [0.25, 0.35])
        with pytest.raises(InvalidArgumentError):
            prox_group_rows(np.ones((2, 2)), [-1.0, 0.0])


@given(seeds)
def test_soft_threshold_polar_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    w, kappa = complex(*rng.uniform(-2, 2, 2)), rng.uniform(0, 2)
    r = np.linspace(0, 3, 100)
    phi = np.linspace(-np.pi, np.pi, 100, endpoint=False)
    X = (r[:, None] * np.exp(1j * phi[None, :])).ravel()
    obj = lambda x: kappa * np.abs(x) + np.abs(x - w) ** 2 / 2
    # no grid point beats the closed form
    assert obj(soft_threshold_entry(w, kappa)) <= obj(X).min() + 1e-12


@given(seeds)
def test_group_colinear_oracle(seed):
    rng = np.random.default_rng(seed)
    w, tau = crandn(rng, 1, 4), rng.uniform(0, 3)
    s = np.linspace(0, 1, 1_000_001)
    obj = tau * s * np.linalg.norm(w) + (1 - s) ** 2 * np.linalg.norm(w) ** 2 / 2
    out = prox_group_rows(w, [tau])
    scale = np.linalg.norm(out) / np.linalg.norm(w)
    np.testing.assert_allclose(out, scale * w, atol=1e-12)  # colinear with w
    assert abs(scale - s[np.argmin(obj)]) <= 1e-6


@given(seeds)
def test_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    A, B = crandn(rng, 4, 3), crandn(rng, 4, 3)
    K, tau = rng.uniform(0, 1, (4, 3)), rng.uniform(0, 2, 4)
    d = np.linalg.norm(A - B)
    assert np.linalg.norm(prox_elementwise(A, K) - prox_elementwise(B, K)) <= d + 1e-12
    assert np.linalg.norm(prox_group_rows(A, tau) - prox_group_rows(B, tau)) <= d + 1e-12


@given(seeds)
def test_monotone_in_threshold(seed):
    rng = np.random.default_rng(seed)
    W, K, tau = crandn(rng, 4, 3), rng.uniform(0, 1, (4, 3)), rng.uniform(0, 2, 4)
    bump, row_bump = rng.uniform(0, 1, (4, 3)), rng.uniform(0, 1, 4)
    assert np.all(np.abs(prox_elementwise(W, K + bump)) <= np.abs(prox_elementwise(W, K)))
    assert np.all(np.linalg.norm(prox_group_rows(W, tau + row_bump), axis=1)
                  <= np.linalg.norm(prox_group_rows(W, tau), axis=1) + 1e-15)
