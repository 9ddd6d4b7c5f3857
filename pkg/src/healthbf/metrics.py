"""Performance functionals: SINR, spectral efficiency, radar MI and reporting metrics.

Logarithms are base 2 throughout, so spectral efficiencies are in
bits/s/Hz and mutual information in bits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ._validation import (
    InvalidArgumentError,
    check_complex_matrix,
    check_hermitian_psd,
    check_positive,
)
from .scenario import MaskKind, steering_matrix

DEFAULT_REL_THRESHOLD = 1e-6


def _sinr_parts(H, W, sigma2_c):
    """Return signal power and interference-plus-noise per user."""
    gains = np.abs(H.conj().T @ W) ** 2  # gains[m, k] = |h_m^H w_k|^2
    signal = np.diag(gains).copy()
    denom = gains.sum(axis=1) - signal + sigma2_c
    return signal, denom


def sinr_all(channel, W, sigma2_c):
    """SINR of every user as a length-M array."""
    sigma2_c = check_positive(sigma2_c, "sigma2_c")
    H = check_complex_matrix(channel, "channel")
    W = check_complex_matrix(W, "W", shape=H.shape)
    signal, denom = _sinr_parts(H, W, sigma2_c)
    return signal / denom


def sinr(channel, W, sigma2_c, m):
    """SINR of user ``m``: own-beam gain over inter-user leakage plus noise."""
    H = check_complex_matrix(channel, "channel")
    if not 0 <= m < H.shape[1]:
        raise InvalidArgumentError(f"user index {m} out of range")
    return float(sinr_all(H, W, sigma2_c)[m])


def spectral_efficiency(gamma):
    """``log2(1 + gamma)``; works elementwise on arrays."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise InvalidArgumentError("SINR must be nonnegative")
    out = np.log2(1.0 + gamma)
    return float(out) if out.ndim == 0 else out


def user_se(channel, W, sigma2_c):
    return spectral_efficiency(sinr_all(channel, W, sigma2_c))


def _mi_eigenvalues(R, W, sigma2_r):
    inner = W.conj().T @ R @ W / sigma2_r
    inner = 0.5 * (inner + inner.conj().T)
    return np.linalg.eigvalsh(inner)


def radar_mi(R, W, sigma2_r):
    """Radar mutual information ``log2 det(I + W^H R W / sigma2_r)`` in bits.

    Evaluated through the M x M Hermitian form, which equals the
    ``n_tx x n_tx`` determinant by Sylvester's identity.
    """
    sigma2_r = check_positive(sigma2_r, "sigma2_r")
    R = check_hermitian_psd(R, "R")
    W = check_complex_matrix(W, "W", shape=(R.shape[0], None))
    ev = np.clip(_mi_eigenvalues(R, W, sigma2_r), 0.0, None)
    return float(np.sum(np.log2(1.0 + ev)))


def apply_mask(W, mask):
    """Scale ``W`` by antenna health: rows for per-antenna masks, entries otherwise."""
    W = check_complex_matrix(W, "W")
    mask.check_compatible(*W.shape)
    return W * mask.entry_matrix(W.shape[1])


def beampattern(W, theta_grid, n_tx, spacing, wavelength, mask=None):
    """Transmit power ``sum_j |a(theta)^H w_j|^2`` over ``theta_grid``."""
    theta_grid = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    if theta_grid.size == 0:
        raise InvalidArgumentError("theta_grid must be nonempty")
    W = check_complex_matrix(W, "W", shape=(n_tx, None))
    if mask is not None:
        W = apply_mask(W, mask)
    A = steering_matrix(theta_grid, n_tx, spacing, wavelength)
    return np.sum(np.abs(A.conj().T @ W) ** 2, axis=1)


def support(W, rel_threshold=DEFAULT_REL_THRESHOLD):
    """Boolean matrix of entries larger than ``rel_threshold * max|w|``."""
    mag = np.abs(check_complex_matrix(W, "W"))
    peak = mag.max(initial=0.0)
    if peak == 0:
        return np.zeros(mag.shape, dtype=bool)
    return mag > rel_threshold * peak


def density_pct(W, rel_threshold=DEFAULT_REL_THRESHOLD):
    """Percentage of effectively nonzero beamforming entries (0 for ``W = 0``)."""
    s = support(W, rel_threshold)
    return 100.0 * float(s.sum()) / s.size


def reliability_pct(W, mask, rel_threshold=DEFAULT_REL_THRESHOLD):
    """Mean antenna health over the support of ``W``, in percent.

    Per-entry masks average over supported entries; per-antenna masks
    average over antennas with any supported entry. ``W = 0`` gives 0.
    """
    W = check_complex_matrix(W, "W")
    mask.check_compatible(*W.shape)
    s = support(W, rel_threshold)
    if mask.kind is MaskKind.PER_ANTENNA:
        rows = s.any(axis=1)
        return 100.0 * float(mask.values[rows].mean()) if rows.any() else 0.0
    return 100.0 * float(mask.values[s].mean()) if s.any() else 0.0


def tx_power(W):
    """``trace(W W^H)``, the squared Frobenius norm."""
    W = np.asarray(W)
    return float(np.sum(np.abs(W) ** 2))


@dataclass(frozen=True)
class MetricsRecord:
    se_per_user: np.ndarray
    rate_per_user: np.ndarray
    radar_mi: float
    density_pct: float
    reliability_pct: float
    tx_power: float

    @property
    def mean_se(self):
        return float(np.mean(self.se_per_user))

    @property
    def mean_rate(self):
        return float(np.mean(self.rate_per_user))

    def csv_header(self):
        return csv_header(len(self.se_per_user))

    def csv_row(self, rho_s):
        values = [rho_s, *self.se_per_user, *self.rate_per_user, self.radar_mi,
                  self.density_pct, self.tx_power, self.reliability_pct]
        return [float(v) for v in values]

    def to_dict(self):
        return {
            "se_per_user": [float(x) for x in self.se_per_user],
            "rate_per_user": [float(x) for x in self.rate_per_user],
            "radar_mi": float(self.radar_mi),
            "density_pct": float(self.density_pct),
            "reliability_pct": float(self.reliability_pct),
            "tx_power": float(self.tx_power),
        }


def csv_header(n_users):
    return (["rho_s"] + [f"se_{j + 1}" for j in range(n_users)]
            + [f"rate_{j + 1}" for j in range(n_users)]
            + ["radar_mi", "density_pct", "power", "reliability_pct"])


def parse_csv_row(header, row):
    """Inverse of :meth:`MetricsRecord.csv_row`; returns ``(rho_s, record)``."""
    values = dict(zip(header, (float(v) for v in row)))
    m = sum(1 for h in header if h.startswith("se_"))
    return values["rho_s"], MetricsRecord(
        se_per_user=np.array([values[f"se_{j + 1}"] for j in range(m)]),
        rate_per_user=np.array([values[f"rate_{j + 1}"] for j in range(m)]),
        radar_mi=values["radar_mi"],
        density_pct=values["density_pct"],
        reliability_pct=values["reliability_pct"],
        tx_power=values["power"],
    )


def compute_metrics(config, channel, R, W, mask=None, rel_threshold=DEFAULT_REL_THRESHOLD):
    """Evaluate every reporting metric of ``W`` in one record.

    ``R`` may be None for a scene without targets (MI is then 0). Without a
    mask the reliability is reported as 100.
    """
    se = user_se(channel, W, config.sigma2_c)
    mi = 0.0 if R is None else radar_mi(R, W, config.sigma2_r)
    rel = 100.0 if mask is None else reliability_pct(W, mask, rel_threshold)
    return MetricsRecord(
        se_per_user=se,
        rate_per_user=config.se_to_rate(se),
        radar_mi=mi,
        density_pct=density_pct(W, rel_threshold),
        reliability_pct=rel,
        tx_power=tx_power(W),
    )


def records_to_csv(rows):
    """Serialize ``(rho_s, MetricsRecord)`` pairs; header-only when empty."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n_users = len(rows[0][1].se_per_user) if rows else 0
    writer.writerow(csv_header(n_users))
    for rho_s, rec in rows:
        writer.writerow([repr(v) for v in rec.csv_row(rho_s)])
    return buf.getvalue()
