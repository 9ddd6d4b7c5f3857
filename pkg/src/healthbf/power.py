"""Phased-array power consumption model.

Component coefficients default to zero, in which case the total power
reduces to the power amplifier draw ``P / eta``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ._validation import InvalidArgumentError, check_positive
from .metrics import tx_power


@dataclass(frozen=True)
class PowerModelParams:
    eta_pa: float = 0.4
    dac_resolution: int = 1
    sampling_rate: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    p_mixer: float = 0.0
    p_lpf: float = 0.0
    p_hybrid_buffer: float = 0.0

    def __post_init__(self):
        if not 0 < self.eta_pa <= 1:
            raise InvalidArgumentError("eta_pa must lie in (0, 1]")
        if int(self.dac_resolution) != self.dac_resolution or self.dac_resolution < 1:
            raise InvalidArgumentError("dac_resolution must be an integer >= 1")
        for name in ("sampling_rate", "c1", "c2", "p_mixer", "p_lpf", "p_hybrid_buffer"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be nonnegative")

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))

    def to_dict(self):
        return asdict(self)


def pa_power(transmit_power, eta_pa):
    """Power drawn by the amplifiers to radiate ``transmit_power``."""
    if eta_pa <= 0:
        raise InvalidArgumentError("eta_pa must be positive")
    return transmit_power / eta_pa


def dac_power(params):
    """DAC draw ``c1 f q + c2 2^q``."""
    q = params.dac_resolution
    return params.c1 * params.sampling_rate * q + params.c2 * 2.0 ** q


def rf_chain_power(params):
    return 2 * params.p_mixer + 2 * params.p_lpf + params.p_hybrid_buffer


def total_power(W, params, n_tx):
    """Base-station consumption: amplifiers plus per-antenna DAC pair and RF chain."""
    per_antenna = 2 * dac_power(params) + rf_chain_power(params)
    return pa_power(tx_power(W), params.eta_pa) + n_tx * per_antenna


def hybrid_power_surrogate(W, eta_pa, p_antenna):
    """``sum_j ||w_j||^2 / eta + P_A sum_i ||row_i||``.

    The row-norm term charges a fixed activation cost per antenna in use,
    so switching antennas off shows up in the power constraint.
    """
    check_positive(eta_pa, "eta_pa")
    W = np.asarray(W, dtype=np.complex128)
    return tx_power(W) / eta_pa + p_antenna * float(np.linalg.norm(W, axis=1).sum())
