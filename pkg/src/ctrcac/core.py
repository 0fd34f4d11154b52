"""Continuous-time retrospective cost adaptation law.

The gains ``theta`` and covariance ``P`` evolve as

    theta_dot = -P Phi_f^T R_z (z + Phi_f theta - u_f) - P Phi^T R_u Phi theta
    P_dot     = -P (Phi_f^T R_z Phi_f + Phi^T R_u Phi) P

with ``P(0) = R_theta^{-1}`` and ``theta(0) = 0``.  The accumulators ``A``,
``b`` and ``c`` of the quadratic retrospective cost are integrated alongside
as an independent check: the running minimizer of
``theta^T A theta + 2 theta^T b + c`` is ``-A^{-1} b``.

The numerical kernels are compiled with numba so the closed-loop simulators
in :mod:`ctrcac.architectures` can call them from their own compiled code.
The public functions below wrap them with shape checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numba import njit

from .validation import (
    ConfigurationError,
    as_matrix,
    check_finite,
    check_hurwitz,
    check_spd,
    check_symmetric_psd,
)

__all__ = [
    "Dimensions",
    "Hyperparameters",
    "FilterRealization",
    "AdaptationState",
    "RetrospectiveQuantities",
    "init_adaptation",
    "control_output",
    "filter_derivative",
    "retrospective_performance",
    "adaptation_derivative",
    "oracle_derivative",
    "evaluate_cost",
    "oracle_gains",
    "stationarity_residual",
]


@dataclass(frozen=True)
class Dimensions:
    """Input, output and gain counts of one adaptive controller."""

    l_u: int
    l_y: int
    l_theta: int

    def __post_init__(self):
        for name in ("l_u", "l_y", "l_theta"):
            if int(getattr(self, name)) <= 0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass
class Hyperparameters:
    """Weights of the retrospective cost.

    Parameters
    ----------
    R_z : ndarray, shape (l_y, l_y)
        Weight on the retrospective performance.  Symmetric positive definite.
    R_u : ndarray, shape (l_u, l_u)
        Weight on the control term.  Symmetric positive semidefinite; zero
        switches the control penalty off.
    R_theta : ndarray, shape (l_theta, l_theta)
        Regularization weight.  Symmetric positive definite; ``P(0)`` is its
        inverse.
    """

    R_z: np.ndarray
    R_u: np.ndarray
    R_theta: np.ndarray

    def __post_init__(self):
        self.R_z = as_matrix(self.R_z, "R_z")
        self.R_u = as_matrix(self.R_u, "R_u")
        self.R_theta = as_matrix(self.R_theta, "R_theta")
        check_spd(self.R_z, "R_z")
        check_symmetric_psd(self.R_u, "R_u")
        check_spd(self.R_theta, "R_theta")

    @classmethod
    def from_scalars(cls, dims, P0, R_z=1.0, R_u=0.0, p0_role="weight"):
        """Build isotropic weights from scalars.

        ``p0_role`` selects how ``P0`` is read.  With ``"weight"`` (the
        convention used by the bundled presets) ``R_theta = P0 * I`` and
        ``P(0) = I / P0``.  With ``"covariance"`` ``P0`` is the initial
        covariance itself, so ``R_theta = I / P0``.
        """
        P0 = float(P0)
        if not np.isfinite(P0) or P0 <= 0:
            raise ConfigurationError("P0 must be a positive finite scalar")
        if p0_role == "weight":
            r_theta = P0
        elif p0_role == "covariance":
            r_theta = 1.0 / P0
        else:
            raise ConfigurationError(f"unknown p0_role {p0_role!r}")
        return cls(
            R_z=float(R_z) * np.eye(dims.l_y),
            R_u=float(R_u) * np.eye(dims.l_u),
            R_theta=r_theta * np.eye(dims.l_theta),
        )

    def check_dims(self, dims):
        expected = {
            "R_z": (dims.l_y, dims.l_y),
            "R_u": (dims.l_u, dims.l_u),
            "R_theta": (dims.l_theta, dims.l_theta),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ConfigurationError(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )


@dataclass
class FilterRealization:
    """State-space realization ``(A_f, B_f, C_f, D_f)`` of the filter G_f.

    ``A_f`` may be ``0 x 0`` for a static filter, in which case only
    ``D_f`` acts.
    """

    A_f: np.ndarray
    B_f: np.ndarray
    C_f: np.ndarray
    D_f: np.ndarray

    def __post_init__(self):
        self.A_f = np.ascontiguousarray(np.atleast_2d(np.asarray(self.A_f, dtype=float)))
        self.B_f = np.ascontiguousarray(np.asarray(self.B_f, dtype=float))
        self.C_f = np.ascontiguousarray(np.asarray(self.C_f, dtype=float))
        self.D_f = np.ascontiguousarray(np.atleast_2d(np.asarray(self.D_f, dtype=float)))
        n_f = self.A_f.shape[0] if self.A_f.size else 0
        if n_f == 0:
            self.A_f = np.zeros((0, 0))
        l_y, l_u = self.D_f.shape
        self.B_f = self.B_f.reshape(n_f, l_u)
        self.C_f = self.C_f.reshape(l_y, n_f)
        if self.A_f.shape != (n_f, n_f):
            raise ConfigurationError("A_f must be square")
        if n_f:
            check_hurwitz(self.A_f, "A_f")

    @classmethod
    def first_order(cls, p_f, size=1):
        """Realization of ``1 / (s + p_f)`` applied channel-wise."""
        p_f = float(p_f)
        if not p_f > 0:
            raise ConfigurationError("filter pole p_f must be positive")
        eye = np.eye(size)
        return cls(A_f=-p_f * eye, B_f=eye, C_f=eye, D_f=np.zeros((size, size)))

    @property
    def n_f(self):
        return self.A_f.shape[0]

    @property
    def l_u(self):
        return self.D_f.shape[1]

    @property
    def l_y(self):
        return self.D_f.shape[0]


@dataclass
class AdaptationState:
    theta: np.ndarray
    P: np.ndarray
    x_Phi: np.ndarray
    x_u: np.ndarray
    oracle_A: np.ndarray
    oracle_b: np.ndarray
    oracle_c: float = 0.0


@dataclass
class RetrospectiveQuantities:
    Phi_f: np.ndarray
    u_f: np.ndarray
    z_hat: np.ndarray


# --- compiled kernels -------------------------------------------------------


@njit(cache=True)
def filter_rates(A_f, B_f, C_f, D_f, x, inp):
    """State derivative and output of the filter for a (rows, cols) input."""
    if A_f.shape[0] == 0:
        return np.zeros(x.shape), D_f @ inp
    return A_f @ x + B_f @ inp, C_f @ x + D_f @ inp


@njit(cache=True)
def adaptation_rates(theta, P, z, Phi, Phi_f, u_f, R_z, R_u):
    z_hat = z + Phi_f @ theta - u_f
    u_pen = R_u @ (Phi @ theta)
    theta_dot = -(P @ (Phi_f.T @ (R_z @ z_hat))) - P @ (Phi.T @ u_pen)
    M = Phi_f.T @ R_z @ Phi_f + Phi.T @ R_u @ Phi
    P_dot = -(P @ M @ P)
    return theta_dot, P_dot


@njit(cache=True)
def oracle_rates(z, Phi, Phi_f, u_f, R_z, R_u):
    e = z - u_f
    A_dot = Phi_f.T @ R_z @ Phi_f + Phi.T @ R_u @ Phi
    b_dot = Phi_f.T @ (R_z @ e)
    c_dot = e @ (R_z @ e)
    return A_dot, b_dot, c_dot


# --- public API -------------------------------------------------------------


def init_adaptation(dims, hp, filt):
    """Initial adaptation state: ``theta = 0``, ``P = R_theta^{-1}``."""
    hp.check_dims(dims)
    if filt.l_u != dims.l_u or filt.l_y != dims.l_y:
        raise ConfigurationError(
            f"filter maps {filt.l_u} inputs to {filt.l_y} outputs, "
            f"expected {dims.l_u} -> {dims.l_y}"
        )
    R = hp.R_theta
    if np.count_nonzero(R - np.diag(np.diag(R))) == 0:
        # exact reciprocal for the common diagonal case
        P = np.diag(1.0 / np.diag(R))
    else:
        try:
            cho = scipy.linalg.cho_factor(R)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("R_theta is singular") from exc
        P = scipy.linalg.cho_solve(cho, np.eye(dims.l_theta))
        P = 0.5 * (P + P.T)
    return AdaptationState(
        theta=np.zeros(dims.l_theta),
        P=P,
        x_Phi=np.zeros((filt.n_f, dims.l_theta)),
        x_u=np.zeros(filt.n_f),
        oracle_A=hp.R_theta.copy(),
        oracle_b=np.zeros(dims.l_theta),
        oracle_c=0.0,
    )


def control_output(Phi, theta):
    """Linearly parameterized control ``u = Phi @ theta``."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (Phi.shape[1],):
        raise ValueError(f"theta has shape {theta.shape}, Phi has {Phi.shape[1]} columns")
    return Phi @ theta


def filter_derivative(filt, x, inp):
    """Propagate the filter for one input.

    ``inp`` is either the control (vector of length ``l_u``) or the regressor
    (``l_u x l_theta``), which is filtered column by column through the same
    realization.  Returns ``(state_derivative, filtered_output)`` with the
    same vector/matrix shape convention as the input.
    """
    inp = np.asarray(inp, dtype=float)
    x = np.asarray(x, dtype=float)
    vector = inp.ndim == 1
    inp2 = inp.reshape(-1, 1) if vector else inp
    if inp2.shape[0] != filt.l_u:
        raise ValueError(f"input has {inp2.shape[0]} rows, filter expects {filt.l_u}")
    x2 = x.reshape(filt.n_f, inp2.shape[1])
    dx, out = filter_rates(
        filt.A_f, filt.B_f, filt.C_f, filt.D_f,
        np.ascontiguousarray(x2), np.ascontiguousarray(inp2),
    )
    if vector:
        return dx.ravel(), out.ravel()
    return dx, out


def retrospective_performance(z, Phi_f, theta_hat, u_f):
    """``z_hat = z + Phi_f theta_hat - u_f``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    Phi_f = np.atleast_2d(np.asarray(Phi_f, dtype=float))
    theta_hat = np.asarray(theta_hat, dtype=float)
    u_f = np.atleast_1d(np.asarray(u_f, dtype=float))
    if Phi_f.shape != (z.shape[0], theta_hat.shape[0]) or u_f.shape != z.shape:
        raise ValueError("inconsistent shapes for retrospective performance")
    return z + Phi_f @ theta_hat - u_f


def _signals(z, Phi, Phi_f, u_f, n_theta):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    Phi = np.ascontiguousarray(np.atleast_2d(np.asarray(Phi, dtype=float)))
    Phi_f = np.ascontiguousarray(np.atleast_2d(np.asarray(Phi_f, dtype=float)))
    u_f = np.atleast_1d(np.asarray(u_f, dtype=float))
    if Phi.shape[1] != n_theta or Phi_f.shape != (z.shape[0], n_theta):
        raise ValueError("regressor shapes do not match the gain vector")
    if u_f.shape != z.shape:
        raise ValueError("u_f must have one entry per output")
    return z, Phi, Phi_f, u_f


def adaptation_derivative(state, z, Phi, Phi_f, u_f, hp):
    """Right-hand side of the gain and covariance ODEs.

    Returns
    -------
    theta_dot : ndarray, shape (l_theta,)
    P_dot : ndarray, shape (l_theta, l_theta)

    Raises
    ------
    DivergenceError
        If any input is NaN or infinite.
    """
    n = state.theta.shape[0]
    z, Phi, Phi_f, u_f = _signals(z, Phi, Phi_f, u_f, n)
    check_finite(state.theta, state.P, z, Phi, Phi_f, u_f)
    return adaptation_rates(
        np.ascontiguousarray(state.theta, dtype=float),
        np.ascontiguousarray(state.P, dtype=float),
        z, Phi, Phi_f, u_f, hp.R_z, hp.R_u,
    )


def oracle_derivative(state, z, Phi, Phi_f, u_f, hp):
    """Derivatives ``(A_dot, b_dot, c_dot)`` of the cost accumulators."""
    z, Phi, Phi_f, u_f = _signals(z, Phi, Phi_f, u_f, state.theta.shape[0])
    A_dot, b_dot, c_dot = oracle_rates(z, Phi, Phi_f, u_f, hp.R_z, hp.R_u)
    return A_dot, b_dot, float(c_dot)


def evaluate_cost(theta_hat, state):
    """Retrospective cost ``theta^T A theta + 2 theta^T b + c`` from the accumulators."""
    th = np.asarray(theta_hat, dtype=float)
    return float(th @ state.oracle_A @ th + 2.0 * th @ state.oracle_b + state.oracle_c)


def oracle_gains(A, b):
    """Minimizer ``-A^{-1} b`` of the accumulated cost, via Cholesky."""
    return -scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), b)


def stationarity_residual(A, b, theta):
    """``||A theta + b|| / (1 + ||b||)``; zero at the exact minimizer."""
    return float(np.linalg.norm(A @ theta + b) / (1.0 + np.linalg.norm(b)))
