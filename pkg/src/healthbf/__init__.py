"""Antenna health-aware selective beamforming for DFRC arrays.

A dual-function radar-communication node chooses a beamformer that trades
radar mutual information against user spectral efficiency while steering
power away from degraded antenna elements. PGDA sparsifies individual
weights; GPGDA switches whole antennas off.
"""

__version__ = "0.1.0"

from ._validation import InvalidArgumentError
from .gradients import fd_oracle, grad_comm, grad_lagrangian_smooth, grad_radar
from .metrics import MetricsRecord, beampattern, compute_metrics, radar_mi, sinr
from .prox import prox_elementwise, prox_group_rows, soft_threshold_entry
from .scenario import MaskKind, RadarScene, ReliabilityMask, SystemConfig
from .solver import (
    DualState,
    GPGDABeamformer,
    GpgdaPowerParams,
    PGDABeamformer,
    SolverOptions,
    gpgda_solve,
    pgda_solve,
)

__all__ = [
    "__version__", "InvalidArgumentError", "SystemConfig", "ReliabilityMask", "MaskKind",
    "RadarScene", "MetricsRecord", "compute_metrics", "sinr", "radar_mi", "beampattern",
    "grad_radar", "grad_comm", "grad_lagrangian_smooth", "fd_oracle",
    "soft_threshold_entry", "prox_elementwise", "prox_group_rows", "DualState",
    "SolverOptions", "GpgdaPowerParams", "PGDABeamformer", "GPGDABeamformer",
    "pgda_solve", "gpgda_solve",
]
