"""Regressor construction for the supported controller structures.

Column-to-gain layouts (fixed; logged gains are read with these):

=========  =====================================  ==============================
kind       regressor row                          gains
=========  =====================================  ==============================
``tf``     ``[-I1 u, ..., -In u, I1 z, ..., In z]``  ``[a_{n-1..0}, b_{n-1..0}]``
``pid``    ``[z, int z, z']``                     ``[k_p, k_i, k_d]``
``ppi``    ``[e, int e]`` (inner loop)            ``[k_p, k_i]``
``fsfi``   ``[int z, x_1, ..., x_lx]``            ``[K_gamma, K_x]``
=========  =====================================  ==============================

``Ij s`` denotes the j-fold repeated integral of ``s`` from zero initial
conditions.  Integral states are advanced by the same integrator as the
plant; the functions here only return their derivatives.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .validation import ConfigurationError

KINDS = ("tf", "pid", "ppi", "fsfi")
MEASURED_RATE, FILTERED_DERIVATIVE = 0, 1
DEFAULT_DERIV_EPS = 0.01


def gain_names(kind, order=2, n_x=2):
    if kind == "tf":
        return [f"a{j}" for j in range(order - 1, -1, -1)] + [f"b{j}" for j in range(order - 1, -1, -1)]
    if kind == "pid":
        return ["kp", "ki", "kd"]
    if kind == "ppi":
        return ["kp", "ki"]
    if kind == "fsfi":
        return ["k_gamma"] + [f"kx{j}" for j in range(n_x)]
    raise ConfigurationError(f"unknown parameterization {kind!r}")


@njit(cache=True)
def chain_rates(stages, signal):
    """Derivatives of a repeated-integral chain tapped on ``signal``."""
    d = np.empty_like(stages)
    if stages.shape[0]:
        d[0] = signal
        d[1:] = stages[:-1]
    return d


@njit(cache=True)
def tf_row(stages_u, stages_z):
    n = stages_u.shape[0]
    row = np.empty((1, 2 * n))
    row[0, :n] = -stages_u
    row[0, n:] = stages_z
    return row


@dataclass
class IntegralChain:
    """Repeated integrals ``stages[j] = I_{j+1} s`` of a tapped signal."""

    order: int
    stages: np.ndarray = None

    def __post_init__(self):
        if int(self.order) < 1:
            raise ConfigurationError("integral chain order must be at least 1")
        if self.stages is None:
            self.stages = np.zeros(self.order)
        self.stages = np.asarray(self.stages, dtype=float)

    def derivative(self, signal):
        return chain_rates(self.stages, float(signal))


@dataclass
class PidState:
    z_integral: float = 0.0
    rate_source: str = "measured"
    deriv_filter_state: float = 0.0
    eps: float = DEFAULT_DERIV_EPS

    def __post_init__(self):
        if self.rate_source not in ("measured", "filtered"):
            raise ConfigurationError("rate_source must be 'measured' or 'filtered'")
        if not self.eps > 0:
            raise ConfigurationError("filtered-derivative time constant must be positive")

    def filtered_rate(self, z):
        """Output of ``s / (eps s + 1)`` for the current filter state."""
        return (z - self.deriv_filter_state) / self.eps


@dataclass
class FsfiState:
    z_integral: np.ndarray = field(default_factory=lambda: np.zeros(1))


def tf_regressor(chain_u, chain_z, n=None):
    """``1 x 2n`` regressor of an n-th order strictly proper transfer function."""
    n = chain_u.order if n is None else n
    if n < 1:
        raise ConfigurationError("transfer-function order must be at least 1")
    if chain_u.order != n or chain_z.order != n:
        raise ConfigurationError("integral chains must both have order n")
    return tf_row(chain_u.stages, chain_z.stages)


def pid_regressor(state, z, z_rate):
    return np.array([[float(z), float(state.z_integral), float(z_rate)]])


def pi_regressor(state, e):
    return np.array([[float(e), float(state.z_integral)]])


def fsfi_regressor(state, z, x):
    """Row ``[int z, x^T]``.  ``z`` is only used to advance the integral."""
    if x is None:
        raise ConfigurationError("FSFI needs the full plant state")
    integral = np.atleast_1d(np.asarray(state.z_integral, dtype=float))
    return np.concatenate([integral, np.asarray(x, dtype=float).ravel()])[None, :]


def regressor_size(kind, order=2, n_x=2):
    return len(gain_names(kind, order, n_x))
