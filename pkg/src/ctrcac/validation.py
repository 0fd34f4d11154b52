"""Input validation helpers and the package's exception types."""

import numpy as np


class ConfigurationError(ValueError):
    """Inconsistent or invalid configuration; raised before any simulation."""


class DivergenceError(FloatingPointError):
    """A NaN or infinity appeared in the adaptation or plant states."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SingularityError(ArithmeticError):
    """Euler-angle kinematics evaluated too close to gimbal lock."""


def as_matrix(value, name):
    """Coerce a scalar or array-like to a C-contiguous 2-D float array."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be a matrix, got ndim={arr.ndim}")
    return np.ascontiguousarray(arr)


def check_square(M, name):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigurationError(f"{name} must be square, got shape {M.shape}")


def check_symmetric(M, name, atol=1e-12):
    check_square(M, name)
    if not np.allclose(M, M.T, rtol=0.0, atol=atol * max(1.0, np.abs(M).max(initial=0.0))):
        raise ConfigurationError(f"{name} must be symmetric")


def check_spd(M, name):
    check_symmetric(M, name)
    if not np.all(np.isfinite(M)):
        raise ConfigurationError(f"{name} has non-finite entries")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ConfigurationError(f"{name} must be positive definite") from None


def check_symmetric_psd(M, name, tol=1e-12):
    check_symmetric(M, name)
    if M.size and np.linalg.eigvalsh(M).min() < -tol * max(1.0, np.abs(M).max()):
        raise ConfigurationError(f"{name} must be positive semidefinite")


def check_hurwitz(A, name):
    if np.linalg.eigvals(A).real.max() >= 0:
        raise ConfigurationError(f"{name} must be Hurwitz (all eigenvalues in the open left half-plane)")


def check_finite(*arrays, time=None):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise DivergenceError("non-finite value in adaptation signals", time=time)


def check_positive(value, name):
    value = float(value)
    if not (np.isfinite(value) and value > 0):
        raise ConfigurationError(f"{name} must be positive, got {value}")
    return value
