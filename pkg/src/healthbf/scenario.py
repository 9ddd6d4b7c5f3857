"""DFRC scenario model: array geometry, radar scene, channels and signals.

All arrays follow one layout: the beamforming matrix ``W`` is ``n_tx x M``
with column ``j`` the beamformer of user ``j`` and row ``i`` the weights
that antenna ``i`` applies across users. The channel ``H`` has the same
shape, column ``j`` being user ``j``'s channel.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from ._validation import (
    InvalidArgumentError,
    check_complex_matrix,
    check_nonnegative,
    check_positive,
    check_positive_int,
    check_real_vector,
)

SPEED_OF_LIGHT = 299_792_458.0
CARRIER_HZ = 28e9
DEFAULT_WAVELENGTH = SPEED_OF_LIGHT / CARRIER_HZ

# 28 GHz split: radar first, then four users (GHz).
_DEFAULT_ALLOCATION_GHZ = (0.4140, 5.6906, 7.6838, 7.6128, 6.5987)
DEFAULT_TOTAL_BANDWIDTH = 28e9
DEFAULT_RATE_MIN = (0.0176, 0.0130, 0.0131, 0.0152)
DEFAULT_RATE_MAX_BPS = 20e9


def _default_user_fractions():
    return tuple(round(g * 1e9 / DEFAULT_TOTAL_BANDWIDTH, 4) for g in _DEFAULT_ALLOCATION_GHZ[1:])


def _default_rate_max():
    return tuple(
        DEFAULT_RATE_MAX_BPS / (f * DEFAULT_TOTAL_BANDWIDTH) for f in _default_user_fractions()
    )


def _freeze(arr):
    arr = np.array(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """Physical and objective parameters of one DFRC node.

    Rate bounds are spectral efficiencies (bits/s/Hz). Bandwidth fractions
    double as the proportional-fairness weights of the objective: the
    radar fraction weights the mutual information term and each user
    fraction weights that user's spectral efficiency.
    """

    n_tx: int = 10
    n_rx: int = 10
    n_users: int = 4
    n_targets: int = 4
    frame_len: int = 10
    wavelength: float = DEFAULT_WAVELENGTH
    spacing: float = DEFAULT_WAVELENGTH / 2
    sigma2_c: float = 0.1
    sigma2_r: float = 0.1
    power_budget: float = 1.0
    total_bandwidth: float = DEFAULT_TOTAL_BANDWIDTH
    bw_fraction_radar: float = 0.0148
    bw_fractions_users: tuple = field(default_factory=_default_user_fractions)
    rate_min: tuple = DEFAULT_RATE_MIN
    rate_max: tuple = field(default_factory=_default_rate_max)
    sparsity_weight: float = 0.0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_users", "frame_len"):
            check_positive_int(getattr(self, name), name)
        check_positive_int(self.n_targets, "n_targets", minimum=0)
        for name in ("wavelength", "spacing", "sigma2_c", "sigma2_r",
                     "power_budget", "total_bandwidth"):
            check_positive(getattr(self, name), name)
        check_nonnegative(self.sparsity_weight, "sparsity_weight")
        m = self.n_users
        fr = check_real_vector(self.bw_fractions_users, "bw_fractions_users", m)
        rmin = check_real_vector(self.rate_min, "rate_min", m, nonnegative=True)
        rmax = check_real_vector(self.rate_max, "rate_max", m)
        object.__setattr__(self, "bw_fractions_users", tuple(fr.tolist()))
        object.__setattr__(self, "rate_min", tuple(rmin.tolist()))
        object.__setattr__(self, "rate_max", tuple(rmax.tolist()))
        # a zero radar weight is allowed so the communication-only case can be posed
        if not 0.0 <= self.bw_fraction_radar < 1.0:
            raise InvalidArgumentError("bw_fraction_radar must lie in [0, 1)")
        if np.any(fr <= 0):
            raise InvalidArgumentError("bw_fractions_users must be strictly positive")
        if abs(self.bw_fraction_radar + fr.sum() - 1.0) > 1e-9:
            raise InvalidArgumentError(
                "bandwidth fractions must sum to 1 "
                f"(got {self.bw_fraction_radar + fr.sum():.12f})"
            )
        if np.any(rmin >= rmax):
            raise InvalidArgumentError("every rate_min must be below rate_max")
        if self.frame_len < self.n_tx:
            raise InvalidArgumentError("frame_len must be at least n_tx")

    @property
    def user_bandwidths(self):
        """Per-user bandwidth in Hz."""
        return np.asarray(self.bw_fractions_users) * self.total_bandwidth

    @property
    def user_weights(self):
        return np.asarray(self.bw_fractions_users)

    def se_to_rate(self, se):
        """Convert per-user spectral efficiencies to bit rates (bits/s)."""
        return np.asarray(se, dtype=float) * self.user_bandwidths

    def rate_to_se(self, rate_bps):
        return np.asarray(rate_bps, dtype=float) / self.user_bandwidths

    def replace(self, **changes):
        data = self.to_dict()
        data.update(changes)
        return SystemConfig(**data)

    def to_dict(self):
        d = asdict(self)
        for key in ("bw_fractions_users", "rate_min", "rate_max"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data):
        """Build a config from a mapping with snake_case field names.

        ``rate_min_bps`` / ``rate_max_bps`` may replace ``rate_min`` /
        ``rate_max``; they are divided by each user's bandwidth.
        """
        data = dict(data)
        known = {f.name for f in fields(cls)}
        kwargs = {k: data[k] for k in known if k in data}
        for key in ("bw_fractions_users", "rate_min", "rate_max"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "rate_min_bps" in data or "rate_max_bps" in data:
            fractions = np.asarray(kwargs.get("bw_fractions_users",
                                              _default_user_fractions()), dtype=float)
            total = float(kwargs.get("total_bandwidth", DEFAULT_TOTAL_BANDWIDTH))
            for key in ("rate_min", "rate_max"):
                bps_key = key + "_bps"
                if bps_key not in data:
                    continue
                if key in data:
                    raise InvalidArgumentError(f"give either {key} or {bps_key}, not both")
                bps = np.broadcast_to(np.asarray(data[bps_key], dtype=float), fractions.shape)
                kwargs[key] = tuple((bps / (fractions * total)).tolist())
        return cls(**kwargs)


class MaskKind(str, Enum):
    PER_ENTRY = "per-entry"
    PER_ANTENNA = "per-antenna"


@dataclass(frozen=True)
class ReliabilityMask:
    """Antenna health values in [0, 1] (0 = failed, 1 = fully operational).

    ``per-entry`` masks hold one value per (antenna, RF chain) pair and have
    the shape of ``W``; ``per-antenna`` masks hold one value per antenna.
    """

    kind: MaskKind
    values: np.ndarray

    def __post_init__(self):
        kind = MaskKind(self.kind)
        values = np.asarray(self.values, dtype=float)
        if kind is MaskKind.PER_ENTRY and values.ndim != 2:
            raise InvalidArgumentError("per-entry mask must be a 2-D array")
        if kind is MaskKind.PER_ANTENNA and values.ndim != 1:
            raise InvalidArgumentError("per-antenna mask must be a 1-D array")
        if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
            raise InvalidArgumentError("mask values must lie in [0, 1]")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def per_entry(cls, values):
        return cls(MaskKind.PER_ENTRY, values)

    @classmethod
    def per_antenna(cls, values):
        return cls(MaskKind.PER_ANTENNA, values)

    @property
    def n_tx(self):
        return self.values.shape[0]

    def entry_matrix(self, n_users):
        """Return the mask broadcast to an ``n_tx x n_users`` matrix."""
        if self.kind is MaskKind.PER_ANTENNA:
            return np.repeat(self.values[:, None], n_users, axis=1)
        if self.values.shape[1] != n_users:
            raise InvalidArgumentError(
                f"mask has {self.values.shape[1]} columns, expected {n_users}"
            )
        return np.array(self.values)

    def check_compatible(self, n_tx, n_users):
        if self.values.shape[0] != n_tx:
            raise InvalidArgumentError(
                f"mask has {self.values.shape[0]} antennas, expected {n_tx}"
            )
        if self.kind is MaskKind.PER_ENTRY and self.values.shape[1] != n_users:
            raise InvalidArgumentError(
                f"mask has {self.values.shape[1]} columns, expected {n_users}"
            )

    def to_json(self):
        return {"kind": self.kind.value, "values": self.values.tolist()}

    @classmethod
    def from_spec(cls, spec, base_dir=None):
        """Build a mask from a config entry.

        Accepts an inline array (2-D gives per-entry, 1-D per-antenna), a
        mapping ``{"kind": ..., "values": ...}``, or a path to a JSON file
        holding either form (relative paths resolve against ``base_dir``).
        """
        if isinstance(spec, (str, Path)):
            path = Path(spec)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            with open(path) as fh:
                spec = json.load(fh)
        if isinstance(spec, dict):
            return cls(spec["kind"], spec["values"])
        values = np.asarray(spec, dtype=float)
        kind = MaskKind.PER_ENTRY if values.ndim == 2 else MaskKind.PER_ANTENNA
        return cls(kind, values)


@dataclass(frozen=True)
class RadarScene:
    """Point targets: angles (rad), expected strengths and complex amplitudes."""

    angles: np.ndarray
    strengths: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        angles = check_real_vector(self.angles, "angles")
        k = angles.shape[0]
        strengths = check_real_vector(self.strengths, "strengths", k)
        amplitudes = np.atleast_1d(np.asarray(self.amplitudes, dtype=np.complex128))
        if amplitudes.shape != (k,):
            raise InvalidArgumentError("amplitudes must have one entry per target")
        if np.any(np.abs(angles) >= np.pi / 2):
            raise InvalidArgumentError("target angles must lie in (-pi/2, pi/2)")
        if np.any(strengths < 0):
            raise InvalidArgumentError("target strengths must be nonnegative")
        object.__setattr__(self, "angles", _freeze(angles))
        object.__setattr__(self, "strengths", _freeze(strengths))
        object.__setattr__(self, "amplitudes", _freeze(amplitudes))

    @property
    def n_targets(self):
        return self.angles.shape[0]


def steering_vector(theta, n, spacing, wavelength):
    """Uniform linear array response toward angle ``theta`` (radians).

    Element ``m`` is ``exp(j 2 pi d m sin(theta) / wavelength)``.
    """
    n = check_positive_int(n, "n")
    wavelength = check_positive(wavelength, "wavelength")
    phase = 2 * np.pi / wavelength * spacing * np.sin(theta)
    return np.exp(1j * phase * np.arange(n))


def steering_matrix(thetas, n, spacing, wavelength):
    """Stack steering vectors as columns: shape ``n x len(thetas)``."""
    n = check_positive_int(n, "n")
    wavelength = check_positive(wavelength, "wavelength")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    phase = 2 * np.pi / wavelength * spacing * np.sin(thetas)
    return np.exp(1j * np.outer(np.arange(n), phase))


def target_response(scene, n_tx, n_rx, spacing, wavelength):
    """Target response matrix ``G`` of shape ``n_rx x n_tx``.

    ``G = sum_k alpha_k b(theta_k) a(theta_k)^H`` with ``b`` the receive and
    ``a`` the transmit steering vector, so that the echo is ``G @ X``.
    """
    if scene.n_targets < 1:
        raise InvalidArgumentError("scene must contain at least one target")
    A = steering_matrix(scene.angles, n_tx, spacing, wavelength)
    B = steering_matrix(scene.angles, n_rx, spacing, wavelength)
    return (B * scene.amplitudes) @ A.conj().T


def radar_covariance(scene, n_tx, spacing, wavelength):
    """Transmit-side radar channel covariance ``sum_k s_k a a^H`` (``n_tx x n_tx``)."""
    if scene.n_targets < 1:
        raise InvalidArgumentError("scene must contain at least one target")
    if np.any(scene.strengths < 0):
        raise InvalidArgumentError("target strengths must be nonnegative")
    A = steering_matrix(scene.angles, n_tx, spacing, wavelength)
    R = (A * scene.strengths) @ A.conj().T
    return 0.5 * (R + R.conj().T)


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def sample_channel(rng, n_tx, n_users):
    """Rayleigh channel ``H`` (``n_tx x n_users``), entries CN(0, 1/n_tx)."""
    n_tx = check_positive_int(n_tx, "n_tx")
    n_users = check_positive_int(n_users, "n_users")
    rng = np.random.default_rng(rng)
    return _complex_normal(rng, (n_tx, n_users)) / np.sqrt(n_tx)


def sample_symbols(rng, n_users, frame_len):
    """Unit-variance complex Gaussian symbol streams, shape ``M x L``."""
    n_users = check_positive_int(n_users, "n_users")
    frame_len = check_positive_int(frame_len, "frame_len")
    if frame_len < n_users:
        raise InvalidArgumentError("frame_len must be at least n_users")
    rng = np.random.default_rng(rng)
    return _complex_normal(rng, (n_users, frame_len))


def random_scene(rng, n_targets, angle_limit=np.pi / 3, strength=1.0):
    """Targets with uniform angles on (-limit, limit), CN(0,1) amplitudes."""
    n_targets = check_positive_int(n_targets, "n_targets")
    rng = np.random.default_rng(rng)
    angles = rng.uniform(-angle_limit, angle_limit, n_targets)
    amplitudes = _complex_normal(rng, n_targets)
    return RadarScene(angles, np.full(n_targets, float(strength)), amplitudes)


def random_mask(rng, shape, clamp_fraction=0.0):
    """Seeded health mask with uniform entries on [0, 1].

    A 2-tuple ``shape`` gives a per-entry mask, an int a per-antenna one.
    ``clamp_fraction`` of the entries (chosen at random) are rounded to the
    nearer of 0 and 1 to model hard failures and healthy elements.
    """
    rng = np.random.default_rng(rng)
    values = rng.uniform(0.0, 1.0, shape)
    if not 0.0 <= clamp_fraction <= 1.0:
        raise InvalidArgumentError("clamp_fraction must lie in [0, 1]")
    n_clamp = int(round(clamp_fraction * values.size))
    if n_clamp:
        flat = values.reshape(-1)
        idx = rng.choice(flat.size, n_clamp, replace=False)
        flat[idx] = np.round(flat[idx])
    if np.ndim(values) == 2:
        return ReliabilityMask.per_entry(values)
    return ReliabilityMask.per_antenna(values)


def synthesize_rx(config, W, S, rng, *, scene=None, channel=None, noise_var=None):
    """Noisy received block for the radar echo or the users.

    With ``scene`` the radar echo ``G W S + noise`` (``n_rx x L``) is
    returned; with ``channel`` the users' observation ``H^H W S + noise``
    (``M x L``). Exactly one of the two must be given. ``noise_var``
    overrides the config's noise variance (0 gives the noiseless signal).
    """
    if (scene is None) == (channel is None):
        raise InvalidArgumentError("pass exactly one of scene or channel")
    W = check_complex_matrix(W, "W")
    S = check_complex_matrix(S, "S")
    if W.shape[1] != S.shape[0]:
        raise InvalidArgumentError(
            f"W has {W.shape[1]} columns but S has {S.shape[0]} rows"
        )
    rng = np.random.default_rng(rng)
    X = W @ S
    if scene is not None:
        G = target_response(scene, W.shape[0], config.n_rx, config.spacing, config.wavelength)
        clean, sigma2 = G @ X, config.sigma2_r
    else:
        H = check_complex_matrix(channel, "channel", shape=(W.shape[0], None))
        clean, sigma2 = H.conj().T @ X, config.sigma2_c
    if noise_var is not None:
        sigma2 = check_nonnegative(noise_var, "noise_var")
    return clean + np.sqrt(sigma2) * _complex_normal(rng, clean.shape)
