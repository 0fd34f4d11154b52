"""Closed-loop wiring of plants, regressors and adaptation cores.

Every architecture compiles to one monolithic derivative map over the
concatenated state ``[plant | loop 1 | loop 2 | ...]``.  Each adaptive loop
owns a contiguous segment laid out as::

    [regressor states | x_Phi (n_f*l_theta) | x_u (n_f) | theta | P | A | b | c]

``A``, ``b``, ``c`` are the accumulators of the retrospective cost and are
only advanced when ``record_oracle`` is set.

Every loop adapts on the performance variable ``z = y - r``.  The cascaded
PPI loop computes the rate command ``v = k_outer (r - y)`` and feeds the PI
block with ``e = v - (y' - r')``; for constant references this is the usual
``v - y'``.  ``v`` is also summed straight into the plant input.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import regressors as reg
from .core import (
    FilterRealization,
    Hyperparameters,
    Dimensions,
    adaptation_rates,
    filter_rates,
    init_adaptation,
    oracle_rates,
)
from .plants import (
    Bicopter,
    DoubleIntegrator,
    RigidBody,
    bicopter_rates,
    double_integrator_rates,
    rigid_body_rates,
    saturate_kernel,
)
from .validation import ConfigurationError

KIND_CODES = {"tf": 0, "pid": 1, "ppi": 2, "fsfi": 3}

LoopParams = namedtuple(
    "LoopParams",
    [
        "kind", "order", "n_x", "n_reg", "n_theta", "n_f", "size",
        "deriv_mode", "eps", "k_outer", "record_oracle",
        "R_z", "R_u", "A_f", "B_f", "C_f", "D_f",
    ],
)


@dataclass
class AdaptiveLoop:
    """One SISO loop: a parameterization plus its adaptation core.

    Parameters
    ----------
    kind : {"tf", "pid", "ppi", "fsfi"}
    hp : Hyperparameters
    filt : FilterRealization
    order : int
        Transfer-function order (``kind="tf"`` only).
    n_x : int
        Number of plant states fed back (``kind="fsfi"`` only).
    deriv_mode : {"measured", "filtered"}
        Source of ``z'`` for PID.
    eps : float
        Time constant of the filtered differentiator ``s / (eps s + 1)``.
    k_outer : float
        Fixed outer proportional gain of the cascaded PPI loop.
    """

    kind: str
    hp: Hyperparameters
    filt: FilterRealization
    order: int = 2
    n_x: int = 2
    deriv_mode: str = "measured"
    eps: float = reg.DEFAULT_DERIV_EPS
    k_outer: float = 1.0
    record_oracle: bool = True

    def __post_init__(self):
        if self.kind not in KIND_CODES:
            raise ConfigurationError(f"unknown parameterization {self.kind!r}")
        if self.kind == "tf" and int(self.order) < 1:
            raise ConfigurationError("transfer-function order must be at least 1")
        if self.deriv_mode not in ("measured", "filtered"):
            raise ConfigurationError("deriv_mode must be 'measured' or 'filtered'")
        if self.kind == "ppi" and not self.k_outer > 0:
            raise ConfigurationError("outer proportional gain must be positive")
        if self.filt.l_u != 1 or self.filt.l_y != 1:
            raise ConfigurationError("loop filters must be SISO")
        self.hp.check_dims(self.dims)

    @property
    def n_theta(self):
        return reg.regressor_size(self.kind, self.order, self.n_x)

    @property
    def dims(self):
        return Dimensions(1, 1, self.n_theta)

    @property
    def n_reg(self):
        if self.kind == "tf":
            return 2 * self.order
        if self.kind == "pid" and self.deriv_mode == "filtered":
            return 2
        return 1

    @property
    def offsets(self):
        nt, nf = self.n_theta, self.filt.n_f
        o = {"reg": 0, "x_Phi": self.n_reg}
        o["x_u"] = o["x_Phi"] + nf * nt
        o["theta"] = o["x_u"] + nf
        o["P"] = o["theta"] + nt
        o["A"] = o["P"] + nt * nt
        o["b"] = o["A"] + nt * nt
        o["c"] = o["b"] + nt
        o["end"] = o["c"] + 1
        return o

    @property
    def size(self):
        return self.offsets["end"]

    @property
    def gain_names(self):
        return reg.gain_names(self.kind, self.order, self.n_x)

    def initial_state(self):
        st = init_adaptation(self.dims, self.hp, self.filt)
        o = self.offsets
        seg = np.zeros(self.size)
        seg[o["theta"]:o["P"]] = st.theta
        seg[o["P"]:o["A"]] = st.P.ravel()
        seg[o["A"]:o["b"]] = st.oracle_A.ravel()
        return seg

    def params(self):
        f = self.filt
        return LoopParams(
            KIND_CODES[self.kind], int(self.order), int(self.n_x), self.n_reg,
            self.n_theta, f.n_f, self.size,
            reg.FILTERED_DERIVATIVE if self.deriv_mode == "filtered" else reg.MEASURED_RATE,
            float(self.eps), float(self.k_outer), bool(self.record_oracle),
            self.hp.R_z, self.hp.R_u,
            np.ascontiguousarray(f.A_f), np.ascontiguousarray(f.B_f),
            np.ascontiguousarray(f.C_f), np.ascontiguousarray(f.D_f),
        )

    def unpack(self, seg):
        """Split a loop segment (or a stack of them, one per row) into named blocks."""
        seg = np.asarray(seg)
        o, nt, nf = self.offsets, self.n_theta, self.filt.n_f
        lead = seg.shape[:-1]
        return {
            "reg": seg[..., o["reg"]:o["x_Phi"]],
            "x_Phi": seg[..., o["x_Phi"]:o["x_u"]].reshape(lead + (nf, nt)),
            "x_u": seg[..., o["x_u"]:o["theta"]],
            "theta": seg[..., o["theta"]:o["P"]],
            "P": seg[..., o["P"]:o["A"]].reshape(lead + (nt, nt)),
            "A": seg[..., o["A"]:o["b"]].reshape(lead + (nt, nt)),
            "b": seg[..., o["b"]:o["c"]],
            "c": seg[..., o["c"]],
        }


@njit(cache=True)
def loop_rates(lp, xs, y, ydot, r, rdot, xplant):
    """Derivative of one loop segment.

    Returns ``(dxs, u, z)`` where ``u`` is the loop's total control output,
    including the outer proportional path for the cascaded PPI.
    """
    nr, nf, nt = lp.n_reg, lp.n_f, lp.n_theta
    o_phi = nr
    o_u = o_phi + nf * nt
    o_th = o_u + nf
    o_P = o_th + nt
    o_A = o_P + nt * nt
    o_b = o_A + nt * nt
    o_c = o_b + nt
    dxs = np.zeros(lp.size)
    theta = np.ascontiguousarray(xs[o_th:o_P])
    z = y - r
    feed = 0.0
    Phi = np.empty((1, nt))
    if lp.kind == 0:
        n = lp.order
        Phi = reg.tf_row(xs[0:n], xs[n:2 * n])
    elif lp.kind == 1:
        if lp.deriv_mode == 1:
            zrate = (z - xs[1]) / lp.eps
            dxs[1] = zrate
        else:
            zrate = ydot - rdot
        Phi[0, 0] = z
        Phi[0, 1] = xs[0]
        Phi[0, 2] = zrate
        dxs[0] = z
    elif lp.kind == 2:
        v = lp.k_outer * (r - y)
        e = v - (ydot - rdot)
        Phi[0, 0] = e
        Phi[0, 1] = xs[0]
        dxs[0] = e
        feed = v
    else:
        Phi[0, 0] = xs[0]
        Phi[0, 1:] = xplant[: lp.n_x]
        dxs[0] = r - y
    u_ad = 0.0
    for j in range(nt):
        u_ad += Phi[0, j] * theta[j]
    if lp.kind == 0:
        n = lp.order
        dxs[0:n] = reg.chain_rates(xs[0:n], u_ad)
        dxs[n:2 * n] = reg.chain_rates(xs[n:2 * n], z)

    x_Phi = np.ascontiguousarray(xs[o_phi:o_u]).reshape((nf, nt))
    x_u = np.ascontiguousarray(xs[o_u:o_th]).reshape((nf, 1))
    uu = np.empty((1, 1))
    uu[0, 0] = u_ad
    dPhi, Phi_f = filter_rates(lp.A_f, lp.B_f, lp.C_f, lp.D_f, x_Phi, Phi)
    du, u_f = filter_rates(lp.A_f, lp.B_f, lp.C_f, lp.D_f, x_u, uu)
    dxs[o_phi:o_u] = dPhi.ravel()
    dxs[o_u:o_th] = du.ravel()

    zv = np.empty(1)
    zv[0] = z
    uf = u_f[:, 0].copy()
    P = np.ascontiguousarray(xs[o_P:o_A]).reshape((nt, nt))
    th_dot, P_dot = adaptation_rates(theta, P, zv, Phi, Phi_f, uf, lp.R_z, lp.R_u)
    dxs[o_th:o_P] = th_dot
    dxs[o_P:o_A] = P_dot.ravel()
    if lp.record_oracle:
        A_dot, b_dot, c_dot = oracle_rates(zv, Phi, Phi_f, uf, lp.R_z, lp.R_u)
        dxs[o_A:o_b] = A_dot.ravel()
        dxs[o_b:o_c] = b_dot
        dxs[o_c] = c_dot
    return dxs, u_ad + feed, z


@njit(cache=True)
def bicopter_allocate_kernel(f_r1, f_r2, m, g, gravity_ff):
    f_t = f_r2 + m * g if gravity_ff else f_r2
    if f_r1 == 0.0 and f_t == 0.0:
        return 0.0, 0.0
    return np.arctan2(-f_r1, f_t), np.sqrt(f_r1 * f_r1 + f_t * f_t)


# --- monolithic closed-loop maps --------------------------------------------


@njit(cache=True)
def single_loop_rhs(t, x, loops, ref, u_limit):
    lp = loops[0]
    r = ref[0] if t >= ref[1] else 0.0
    xp = x[0:2]
    dx = np.empty(x.shape[0])
    dseg, u, z = loop_rates(lp, x[2:], x[0], x[1], r, 0.0, xp)
    if u_limit > 0.0:
        u = min(max(u, -u_limit), u_limit)
    dx[0:2] = double_integrator_rates(xp, u)
    dx[2:] = dseg
    sig = np.array([r, x[0], z, u])
    return dx, sig


@njit(cache=True)
def ellipse_reference(t, ref):
    a, b, phi, w = ref[0], ref[1], ref[2], ref[3]
    c, s = np.cos(w * t), np.sin(w * t)
    cp, sp = np.cos(phi), np.sin(phi)
    r1 = a * cp - a * cp * c - b * sp * s
    r2 = a * sp - a * sp * c + b * cp * s
    d1 = a * cp * w * s - b * sp * w * c
    d2 = a * sp * w * s + b * cp * w * c
    return r1, r2, d1, d2


@njit(cache=True)
def bicopter_rhs(t, x, loops, ref, plant):
    m, J, g, gff = plant[0], plant[1], plant[2], plant[3] > 0.5
    r1, r2, d1, d2 = ellipse_reference(t, ref)
    dx = np.empty(x.shape[0])
    o1 = 6
    o2 = o1 + loops[0].size
    o3 = o2 + loops[1].size
    o4 = o3 + loops[2].size
    xp1 = np.array([x[0], x[3]])
    xp2 = np.array([x[1], x[4]])
    xp3 = np.array([x[2], x[5]])
    dseg1, f1, e1 = loop_rates(loops[0], x[o1:o2], x[0], x[3], r1, d1, xp1)
    dseg2, f2, e2 = loop_rates(loops[1], x[o2:o3], x[1], x[4], r2, d2, xp2)
    th_d, F = bicopter_allocate_kernel(f1, f2, m, g, gff)
    dseg3, M, e3 = loop_rates(loops[2], x[o3:o4], x[2], x[5], th_d, 0.0, xp3)
    dx[0:6] = bicopter_rates(x[0:6], F, M, m, J, g)
    dx[o1:o2] = dseg1
    dx[o2:o3] = dseg2
    dx[o3:o4] = dseg3
    sig = np.array([r1, r2, th_d, x[0], x[1], x[2], e1, e2, e3, F, M, f1, f2])
    return dx, sig


@njit(cache=True)
def attitude_rhs(t, x, loops, ref, u_limit, J, J_inv, tau_dist):
    dx = np.empty(x.shape[0])
    tau_cmd = np.empty(3)
    err = np.empty(3)
    o = 6
    for i in range(3):
        lp = loops[i]
        xp = np.array([x[i], x[3 + i]])
        dseg, u, z = loop_rates(lp, x[o:o + lp.size], x[i], x[3 + i], ref[i], 0.0, xp)
        dx[o:o + lp.size] = dseg
        tau_cmd[i] = u
        err[i] = z
        o += lp.size
    tau = saturate_kernel(tau_cmd, u_limit) if u_limit > 0.0 else tau_cmd
    dx[0:6] = rigid_body_rates(x[0:6], tau, J, J_inv, tau_dist)
    sig = np.empty(15)
    sig[0:3] = ref
    sig[3:6] = x[0:3]
    sig[6:9] = err
    sig[9:12] = tau_cmd
    sig[12:15] = tau
    return dx, sig


# --- Python-side systems ----------------------------------------------------


class ClosedLoopSystem:
    """A closed loop ready for :func:`ctrcac.simulate.integrate`.

    Subclasses set ``kernel`` (a compiled ``rhs(t, x, *args) -> (dx, sig)``),
    ``args``, ``plant``, ``loops`` (with their segment offsets) and the names
    of the signal vector.
    """

    kernel = None
    signal_names: list = []
    loop_names: list = []
    error_columns: list = []

    def __init__(self, plant, loops, x0_plant=None):
        self.plant = plant
        self.loops = list(loops)
        x0p = plant.initial_state() if x0_plant is None else np.asarray(x0_plant, dtype=float)
        if x0p.shape != (plant.n_states,):
            raise ConfigurationError(f"initial plant state must have {plant.n_states} entries")
        self.x0_plant = x0p
        self.loop_offsets = []
        o = plant.n_states
        for lp in self.loops:
            self.loop_offsets.append(o)
            o += lp.size
        self.n_states = o

    @property
    def loop_params(self):
        return tuple(lp.params() for lp in self.loops)

    def initial_state(self):
        return np.concatenate([self.x0_plant] + [lp.initial_state() for lp in self.loops])

    def loop_segment(self, x, i):
        o = self.loop_offsets[i]
        return np.asarray(x)[..., o:o + self.loops[i].size]

    def symmetric_blocks(self):
        """``(offset, n)`` of every covariance block, for per-step symmetrization."""
        return np.array(
            [[o + lp.offsets["P"], lp.n_theta] for o, lp in zip(self.loop_offsets, self.loops)],
            dtype=np.int64,
        )

    @property
    def args(self):
        raise NotImplementedError

    def evaluate(self, t, x):
        """``(dx, signals)`` at one point; a pure function of ``(t, x)``."""
        return self.kernel(float(t), np.ascontiguousarray(x, dtype=float), *self.args)

    def __call__(self, t, x):
        return self.evaluate(t, x)[0]


class SingleLoopSystem(ClosedLoopSystem):
    """One adaptive loop around the double integrator tracking a step."""

    kernel = staticmethod(single_loop_rhs)
    signal_names = ["r", "y", "z", "u"]
    error_columns = ["z"]
    allowed_kinds = tuple(KIND_CODES)

    def __init__(self, loop, plant=None, step=1.0, step_time=0.0, u_limit=0.0, x0_plant=None):
        plant = DoubleIntegrator() if plant is None else plant
        if not isinstance(plant, DoubleIntegrator):
            raise ConfigurationError("single-loop architectures bind the double integrator")
        if loop.kind not in self.allowed_kinds:
            raise ConfigurationError(f"{type(self).__name__} does not accept a {loop.kind!r} loop")
        if loop.kind == "fsfi" and loop.n_x != plant.n_states:
            raise ConfigurationError("FSFI loop must feed back every plant state")
        super().__init__(plant, [loop], x0_plant)
        self.step = float(step)
        self.step_time = float(step_time)
        self.u_limit = float(u_limit)
        self.loop_names = ["loop"]

    @property
    def args(self):
        return (self.loop_params, np.array([self.step, self.step_time]), self.u_limit)


class ServoLoop(SingleLoopSystem):
    allowed_kinds = ("tf", "pid")


class CascadedPpiLoop(SingleLoopSystem):
    allowed_kinds = ("ppi",)


class FsfiLoop(SingleLoopSystem):
    allowed_kinds = ("fsfi",)


class BicopterAutopilot(ClosedLoopSystem):
    """Two outer position loops and an inner roll loop on the bicopter.

    The outer loops produce the effective forces ``f_r1``, ``f_r2``; the
    allocation turns them into a desired roll and a thrust magnitude, and the
    inner loop tracks the desired roll with the moment ``M``.
    """

    kernel = staticmethod(bicopter_rhs)
    signal_names = ["r1_ref", "r2_ref", "roll_ref", "r1", "r2", "roll",
                    "z_r1", "z_r2", "z_roll", "F", "M", "f_r1", "f_r2"]
    error_columns = ["z_r1", "z_r2"]

    def __init__(self, outer_r1, outer_r2, inner, plant=None, ellipse=(5.0, 3.0, np.pi / 4, 0.1),
                 gravity_ff=True, x0_plant=None):
        plant = Bicopter() if plant is None else plant
        if not isinstance(plant, Bicopter):
            raise ConfigurationError("the bicopter autopilot binds the bicopter plant")
        for lp in (outer_r1, outer_r2, inner):
            if lp.kind not in ("pid", "ppi"):
                raise ConfigurationError("bicopter loops must be PID or cascaded PPI")
        super().__init__(plant, [outer_r1, outer_r2, inner], x0_plant)
        self.ellipse = np.asarray(ellipse, dtype=float)
        self.gravity_ff = bool(gravity_ff)
        self.loop_names = ["r1", "r2", "roll"]

    @property
    def args(self):
        p = self.plant
        return (self.loop_params, self.ellipse,
                np.array([p.m, p.J, p.g, 1.0 if self.gravity_ff else 0.0]))

    @property
    def period(self):
        return 2 * np.pi / self.ellipse[3]


class AttitudeStack(ClosedLoopSystem):
    """Three independent per-axis loops on the rigid body, torque saturated."""

    kernel = staticmethod(attitude_rhs)
    signal_names = (
        [f"ref_{a}" for a in ("roll", "pitch", "yaw")]
        + ["roll", "pitch", "yaw"]
        + [f"z_{a}" for a in ("roll", "pitch", "yaw")]
        + [f"tau_cmd_{i}" for i in (1, 2, 3)]
        + [f"tau_{i}" for i in (1, 2, 3)]
    )
    error_columns = ["z_roll", "z_pitch", "z_yaw"]

    def __init__(self, loops, plant=None, reference=(0.0, 0.0, 0.0), u_limit=0.2, x0_plant=None):
        plant = RigidBody() if plant is None else plant
        if not isinstance(plant, RigidBody):
            raise ConfigurationError("the attitude stack binds the rigid-body plant")
        loops = list(loops)
        if len(loops) != 3:
            raise ConfigurationError("the attitude stack needs exactly three loops")
        for lp in loops:
            if lp.kind not in ("fsfi", "ppi", "pid"):
                raise ConfigurationError("attitude loops must be FSFI, cascaded PPI or PID")
            if lp.kind == "fsfi" and lp.n_x != 2:
                raise ConfigurationError("per-axis FSFI feeds back (angle, rate)")
        super().__init__(plant, loops, x0_plant)
        self.reference = np.asarray(reference, dtype=float).reshape(3)
        self.u_limit = float(u_limit)
        self.loop_names = ["roll", "pitch", "yaw"]

    @property
    def args(self):
        p = self.plant
        return (self.loop_params, self.reference, self.u_limit, p.J, p.J_inv, p.tau_dist)


# --- single evaluations -----------------------------------------------------


def loop_step(loop, segment, y, ydot, r, rdot=0.0, x_plant=None):
    """Evaluate one loop: returns ``(u, segment_derivative, z)``."""
    if x_plant is None:
        if loop.kind == "fsfi":
            raise ConfigurationError("FSFI needs the full plant state")
        x_plant = np.zeros(loop.n_x)
    dseg, u, z = loop_rates(
        loop.params(), np.ascontiguousarray(segment, dtype=float),
        float(y), float(ydot), float(r), float(rdot),
        np.ascontiguousarray(x_plant, dtype=float),
    )
    return u, dseg, z


def servo_step(loop, segment, y, r, ydot=0.0, rdot=0.0):
    if loop.kind not in ("tf", "pid"):
        raise ConfigurationError("servo loops use tf or pid regressors")
    return loop_step(loop, segment, y, ydot, r, rdot)[:2]


def ppi_step(loop, segment, y, ydot, r, rdot=0.0):
    if ydot is None:
        raise ConfigurationError("the cascaded PPI loop needs a rate measurement")
    if loop.kind != "ppi":
        raise ConfigurationError("ppi_step needs a 'ppi' loop")
    return loop_step(loop, segment, y, ydot, r, rdot)[:2]


def fsfi_step(loop, segment, x, y, r):
    if loop.kind != "fsfi":
        raise ConfigurationError("fsfi_step needs an 'fsfi' loop")
    return loop_step(loop, segment, y, 0.0, r, x_plant=x)[:2]


def bicopter_allocate(f_r1, f_r2, m, g, gravity_ff=True):
    """Desired roll and thrust magnitude realizing the effective forces."""
    return bicopter_allocate_kernel(float(f_r1), float(f_r2), float(m), float(g), bool(gravity_ff))


def bicopter_autopilot_step(ap, x, t):
    """``(F, M, dx)`` of the full autopilot state at time ``t``."""
    dx, sig = ap.evaluate(t, x)
    names = ap.signal_names
    return sig[names.index("F")], sig[names.index("M")], dx


def attitude_stack_step(stack, x, t):
    """``(tau_applied, dx)`` of the attitude closed loop at time ``t``."""
    dx, sig = stack.evaluate(t, x)
    return sig[12:15], dx
