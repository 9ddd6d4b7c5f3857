"""Ascent directions for the smooth part of the beamforming Lagrangian.

Every gradient here is the conjugate Wirtinger derivative ``df/dW*``: for
a real functional ``f``, ``W + eta * g`` increases ``f`` for small
``eta > 0``, and ``g`` equals half the real gradient written in complex
form. :func:`fd_oracle` computes the same quantity numerically and is the
reference the analytic forms are checked against.
"""

from __future__ import annotations

import numpy as np

from ._validation import (
    check_complex_matrix,
    check_hermitian_psd,
    check_nonnegative,
    check_positive,
    check_real_vector,
)
from .metrics import _mi_eigenvalues, _sinr_parts

LN2 = np.log(2.0)


def _grad_radar(W, R, sigma2_r, rho_r):
    if rho_r == 0 or R is None:
        return np.zeros_like(W)
    RW = R @ W
    inner = np.eye(W.shape[1]) + W.conj().T @ RW / sigma2_r
    inner = 0.5 * (inner + inner.conj().T)
    # RW @ inv(inner) via a solve on the Hermitian system
    return (rho_r / (sigma2_r * LN2)) * np.linalg.solve(inner, RW.conj().T).conj().T


def _grad_comm(W, H, sigma2_c, weights):
    A = H.conj().T @ W  # A[m, k] = h_m^H w_k
    gains = np.abs(A) ** 2
    signal = np.diag(gains)
    total = gains.sum(axis=1) + sigma2_c
    denom = total - signal
    # d SE_m / d w_k^* = (1/S_m - [k != m]/D_m) h_m h_m^H w_k / ln 2
    coef = np.repeat((1.0 / total)[:, None], W.shape[1], axis=1) - (1.0 / denom)[:, None]
    np.fill_diagonal(coef, 1.0 / total)
    coef *= np.asarray(weights, dtype=float)[:, None] / LN2
    return H @ (coef * A)


def grad_radar(W, R, sigma2_r, rho_r):
    """Gradient of ``rho_r * log2 det(I + W^H R W / sigma2_r)``.

    Closed form ``rho_r R W (I + W^H R W / sigma2_r)^{-1} / (sigma2_r ln 2)``.
    """
    sigma2_r = check_positive(sigma2_r, "sigma2_r")
    rho_r = check_nonnegative(rho_r, "rho_r")
    R = check_hermitian_psd(R, "R")
    W = check_complex_matrix(W, "W", shape=(R.shape[0], None))
    return _grad_radar(W, R, sigma2_r, rho_r)


def grad_comm(W, channel, sigma2_c, weights):
    """Gradient of ``sum_m weights[m] * log2(1 + SINR_m)``.

    Column ``k`` collects user ``k``'s own-signal term and the interference
    terms it causes at every other user.
    """
    sigma2_c = check_positive(sigma2_c, "sigma2_c")
    H = check_complex_matrix(channel, "channel")
    W = check_complex_matrix(W, "W", shape=H.shape)
    weights = check_real_vector(weights, "weights", H.shape[1])
    return _grad_comm(W, H, sigma2_c, weights)


def grad_power_term(W, mu):
    """Gradient of ``-mu * trace(W W^H)``, i.e. ``-mu * W``."""
    mu = check_nonnegative(mu, "mu")
    return -mu * np.asarray(W, dtype=np.complex128)


def _comm_weights(config, duals):
    return (np.asarray(config.bw_fractions_users) + np.asarray(duals.lambda1)
            - np.asarray(duals.lambda2))


def grad_lagrangian_smooth(W, R, channel, duals, config, power_scale=1.0):
    """Ascent direction of the smooth Lagrangian at ``W``.

    The radar term is weighted by the radar bandwidth fraction and user
    ``j``'s rate term by ``rho_j + lambda1_j - lambda2_j``. The power
    penalty is ``mu * power_scale * trace(W W^H)``; ``power_scale`` is
    ``1 / eta_PA`` for the hybrid power constraint of antenna selection.
    """
    H = check_complex_matrix(channel, "channel", shape=(config.n_tx, config.n_users))
    W = check_complex_matrix(W, "W", shape=H.shape)
    if R is not None:
        R = check_hermitian_psd(R, "R")
    g = _grad_radar(W, R, config.sigma2_r, config.bw_fraction_radar)
    g += _grad_comm(W, H, config.sigma2_c, _comm_weights(config, duals))
    g += grad_power_term(W, duals.mu * power_scale)
    return g


def smooth_lagrangian(W, R, channel, duals, config, power_scale=1.0, power_budget=None):
    """Value of the smooth Lagrangian whose ascent direction is
    :func:`grad_lagrangian_smooth`.

    ``rho_r MI + sum_j rho_j SE_j + sum_j lambda1_j (SE_j - Rmin_j)
    + sum_j lambda2_j (Rmax_j - SE_j) - mu (power_scale tr(W W^H) - budget)``
    """
    budget = config.power_budget if power_budget is None else power_budget
    H = np.asarray(channel, dtype=np.complex128)
    W = np.asarray(W, dtype=np.complex128)
    signal, denom = _sinr_parts(H, W, config.sigma2_c)
    se = np.log2(1.0 + signal / denom)
    value = float(np.dot(config.bw_fractions_users, se))
    value += float(np.dot(duals.lambda1, se - np.asarray(config.rate_min)))
    value += float(np.dot(duals.lambda2, np.asarray(config.rate_max) - se))
    if R is not None and config.bw_fraction_radar:
        ev = np.clip(_mi_eigenvalues(R, W, config.sigma2_r), 0.0, None)
        value += config.bw_fraction_radar * float(np.sum(np.log2(1.0 + ev)))
    value -= duals.mu * (power_scale * float(np.sum(np.abs(W) ** 2)) - budget)
    return value


def fd_oracle(functional, W, h=None):
    """Numerical conjugate gradient of a real functional by central differences.

    Entry ``(i, j)`` is ``(df/dx + 1j * df/dy) / 2`` where ``x`` and ``y``
    are the real and imaginary parts of ``W[i, j]``.
    """
    W = check_complex_matrix(W, "W")
    if h is None:
        h = 1e-6 * (1.0 + float(np.max(np.abs(W), initial=0.0)))
    h = check_positive(h, "h")
    grad = np.zeros_like(W)

    def f(X):
        val = float(functional(X))
        if not np.isfinite(val):
            raise FloatingPointError("functional returned a non-finite value")
        return val

    E = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        E[idx] = h
        d_re = (f(W + E) - f(W - E)) / (2 * h)
        E[idx] = 1j * h
        d_im = (f(W + E) - f(W - E)) / (2 * h)
        E[idx] = 0
        grad[idx] = 0.5 * (d_re + 1j * d_im)
    return grad


def relative_error(analytic, numeric):
    """Relative Frobenius error, guarded for a vanishing reference."""
    scale = max(np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)

