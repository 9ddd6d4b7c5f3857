"""Input validation helpers shared across the package.

scikit-learn's ``check_array`` rejects complex input, so the complex
matrix checks live here.
"""

import numbers

import numpy as np


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


def check_complex_matrix(a, name="array", shape=None, allow_nonfinite=False):
    """Return ``a`` as a 2-D complex128 array, validating shape and finiteness."""
    arr = np.asarray(a)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got ndim={arr.ndim}")
    arr = arr.astype(np.complex128, copy=False)
    if shape is not None:
        for got, want, axis in zip(arr.shape, shape, ("rows", "columns")):
            if want is not None and got != want:
                raise InvalidArgumentError(
                    f"{name} has {got} {axis}, expected {want}"
                )
    if not allow_nonfinite and not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains NaN or infinite entries")
    return arr


def check_real_vector(a, name="vector", length=None, nonnegative=False):
    arr = np.atleast_1d(np.asarray(a, dtype=float))
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be 1-D")
    if length is not None and arr.shape[0] != length:
        raise InvalidArgumentError(
            f"{name} has length {arr.shape[0]}, expected {length}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains NaN or infinite entries")
    if nonnegative and np.any(arr < 0):
        raise InvalidArgumentError(f"{name} must be nonnegative")
    return arr


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise InvalidArgumentError(f"{name} must be a positive real, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise InvalidArgumentError(
            f"{name} must be a nonnegative real, got {value!r}"
        )
    return float(value)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidArgumentError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidArgumentError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_hermitian_psd(R, name="R", tol=1e-8):
    """Validate a Hermitian PSD matrix and return its symmetrized copy."""
    R = check_complex_matrix(R, name)
    if R.shape[0] != R.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got {R.shape}")
    scale = max(1.0, float(np.max(np.abs(R)))) if R.size else 1.0
    if np.max(np.abs(R - R.conj().T), initial=0.0) > 1e-8 * scale:
        raise InvalidArgumentError(f"{name} is not Hermitian")
    R = 0.5 * (R + R.conj().T)
    if R.size and np.linalg.eigvalsh(R)[0] < -tol * scale:
        raise InvalidArgumentError(f"{name} is not positive semidefinite")
    return R
