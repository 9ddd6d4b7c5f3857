"""Proximal operators for health-weighted sparsity.

Elementwise soft thresholding handles the weighted l1 penalty on individual
beamforming weights; row shrinkage handles the weighted sum of row l2
norms that switches whole antennas off.
"""

from __future__ import annotations

import numpy as np

from ._validation import InvalidArgumentError, check_complex_matrix, check_real_vector


def soft_threshold_entry(w, kappa):
    """Complex soft thresholding: ``w * max(1 - kappa / |w|, 0)``.

    Minimizes ``kappa |x| + |x - w|^2 / 2``. Also accepts arrays of ``w``
    and broadcastable ``kappa``.
    """
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0):
        raise InvalidArgumentError("thresholds must be nonnegative")
    w = np.asarray(w, dtype=np.complex128)
    mag = np.abs(w)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > 0, np.maximum(1.0 - kappa / mag, 0.0), 0.0)
    out = w * scale
    return complex(out) if out.ndim == 0 else out


def elementwise_thresholds(beta, rho_s, eta):
    """Threshold plan ``eta * rho_s * (1 - beta)`` for entrywise shrinkage."""
    beta = np.asarray(beta, dtype=float)
    return eta * rho_s * (1.0 - beta)


def row_thresholds(beta_vec, rho_s, eta, power_dual=0.0, p_antenna=0.0):
    """Per-antenna thresholds ``eta * (rho_s (1 - beta'_i) + lambda P_A)``."""
    beta_vec = np.asarray(beta_vec, dtype=float)
    return eta * (rho_s * (1.0 - beta_vec) + power_dual * p_antenna)


def prox_elementwise(W, kappa):
    """Apply :func:`soft_threshold_entry` with a per-entry threshold matrix."""
    W = check_complex_matrix(W, "W")
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != W.shape:
        raise InvalidArgumentError(
            f"threshold plan has shape {kappa.shape}, expected {W.shape}"
        )
    return soft_threshold_entry(W, kappa)


def prox_group_rows(W, thresholds):
    """Shrink row ``i`` of ``W`` by ``max(1 - tau_i / ||row_i||, 0)``."""
    W = check_complex_matrix(W, "W")
    tau = check_real_vector(thresholds, "thresholds", W.shape[0], nonnegative=True)
    norms = np.linalg.norm(W, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, np.maximum(1.0 - tau / norms, 0.0), 0.0)
    return W * scale[:, None]
