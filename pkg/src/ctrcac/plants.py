"""Continuous-time plant models.

Each plant exposes a pure derivative map, an output map and a rate output.
The compiled ``*_rates`` kernels are what the closed-loop simulators call;
the classes wrap them for direct use and for configuration.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .validation import ConfigurationError, SingularityError, as_matrix, check_spd

GRAVITY = 9.81
PITCH_GUARD = 1e-3


@njit(cache=True)
def double_integrator_rates(x, u):
    return np.array([x[1], u])


@njit(cache=True)
def bicopter_rates(x, F, M, m, J, g):
    r1dd = -F * np.sin(x[2]) / m
    r2dd = (F * np.cos(x[2]) - m * g) / m
    return np.array([x[3], x[4], x[5], r1dd, r2dd, M / J])


@njit(cache=True)
def euler_321_matrix(angles):
    """Body rates to 3-2-1 Euler-angle rates; NaN-filled inside the pitch guard."""
    phi, theta = angles[0], angles[1]
    S = np.empty((3, 3))
    if abs(theta) >= np.pi / 2 - PITCH_GUARD:
        S[:] = np.nan
        return S
    sp, cp = np.sin(phi), np.cos(phi)
    ct, tt = np.cos(theta), np.tan(theta)
    S[0, 0] = 1.0
    S[0, 1] = sp * tt
    S[0, 2] = cp * tt
    S[1, 0] = 0.0
    S[1, 1] = cp
    S[1, 2] = -sp
    S[2, 0] = 0.0
    S[2, 1] = sp / ct
    S[2, 2] = cp / ct
    return S


@njit(cache=True)
def cross(a, b):
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


@njit(cache=True)
def rigid_body_rates(x, tau, J, J_inv, tau_dist):
    w = x[3:6]
    dx = np.empty(6)
    dx[0:3] = euler_321_matrix(x[0:3]) @ w
    dx[3:6] = J_inv @ (tau + tau_dist - cross(w, J @ w))
    return dx


@njit(cache=True)
def saturate_kernel(v, limit):
    out = np.empty_like(v)
    for i in range(v.shape[0]):
        out[i] = min(max(v[i], -limit), limit)
    return out


def saturate(tau, limit):
    """Clamp each component of ``tau`` to ``[-limit, limit]``."""
    if not limit > 0:
        raise ConfigurationError("saturation limit must be positive")
    return np.clip(np.asarray(tau, dtype=float), -limit, limit)


def euler_321_kinematics(angles):
    """Matrix ``S`` with ``d(angles)/dt = S @ omega`` for [roll, pitch, yaw].

    Raises
    ------
    SingularityError
        If ``|pitch| >= pi/2 - 1e-3``.
    """
    angles = np.asarray(angles, dtype=float)
    if abs(angles[1]) >= np.pi / 2 - PITCH_GUARD:
        raise SingularityError(f"pitch {angles[1]:.6f} rad is inside the gimbal-lock guard band")
    return euler_321_matrix(angles)


class Plant:
    """Common interface: ``derivative(x, u)``, ``output(x)``, ``rate(x)``."""

    n_states: int
    n_inputs: int
    n_outputs: int
    full_state = True

    def initial_state(self):
        return np.zeros(self.n_states)


@dataclass
class DoubleIntegrator(Plant):
    """``q'' = u`` with ``y = q``; the rate output is ``q'``."""

    n_states = 2
    n_inputs = 1
    n_outputs = 1

    def derivative(self, x, u):
        return double_integrator_rates(np.asarray(x, dtype=float), float(np.ravel(u)[0]))

    def output(self, x):
        return np.array([x[0]])

    def rate(self, x):
        return np.array([x[1]])


@dataclass
class Bicopter(Plant):
    """Planar bicopter, state ``(r1, r2, roll, r1', r2', roll')``."""

    m: float = 1.5
    J: float = 0.03
    g: float = GRAVITY

    n_states = 6
    n_inputs = 2
    n_outputs = 3

    def __post_init__(self):
        if not (self.m > 0 and self.J > 0):
            raise ConfigurationError("bicopter mass and inertia must be positive")

    def derivative(self, x, F, M=None):
        if M is None:
            F, M = F
        return bicopter_rates(np.asarray(x, dtype=float), float(F), float(M), self.m, self.J, self.g)

    def output(self, x):
        return np.asarray(x[0:3], dtype=float).copy()

    def rate(self, x):
        return np.asarray(x[3:6], dtype=float).copy()


@dataclass
class RigidBody(Plant):
    """Rigid-body attitude, state ``(roll, pitch, yaw, w1, w2, w3)``.

    ``tau_dist`` is a constant torque added to the control torque.
    """

    J: np.ndarray = field(default_factory=lambda: np.diag([0.02, 0.02, 0.035]))
    tau_dist: np.ndarray = field(default_factory=lambda: np.array([0.05, 0.05, 0.0]))

    n_states = 6
    n_inputs = 3
    n_outputs = 3

    def __post_init__(self):
        J = np.asarray(self.J, dtype=float)
        if J.ndim == 1:
            J = np.diag(J)
        self.J = as_matrix(J, "J")
        if self.J.shape != (3, 3):
            raise ConfigurationError("inertia must be 3x3")
        check_spd(self.J, "J")
        self.J_inv = np.ascontiguousarray(np.linalg.inv(self.J))
        self.tau_dist = np.asarray(self.tau_dist, dtype=float).reshape(3)

    def derivative(self, x, tau):
        x = np.asarray(x, dtype=float)
        if abs(x[1]) >= np.pi / 2 - PITCH_GUARD:
            raise SingularityError("pitch inside the gimbal-lock guard band")
        return rigid_body_rates(x, np.asarray(tau, dtype=float), self.J, self.J_inv, self.tau_dist)

    def output(self, x):
        return np.asarray(x[0:3], dtype=float).copy()

    def rate(self, x):
        return np.asarray(x[3:6], dtype=float).copy()

    def kinetic_energy(self, x):
        w = np.asarray(x[3:6], dtype=float)
        return 0.5 * w @ self.J @ w
