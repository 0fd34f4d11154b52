"""Fixed-step integration, trajectory logging and run metrics."""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .validation import ConfigurationError

RK4, EULER = 0, 1
_METHODS = {"rk4": RK4, "euler": EULER}


@dataclass
class SimConfig:
    """Integration settings.

    ``T / dt`` must be at least 10.  ``log_decimation`` keeps every n-th
    step; the final time is always logged when it lands on the grid.
    """

    dt: float = 1e-3
    T: float = 50.0
    integrator: str = "rk4"
    log_decimation: int = 10
    record_oracle: bool = True

    def __post_init__(self):
        self.dt = float(self.dt)
        self.T = float(self.T)
        if not (self.dt > 0 and self.T > 0):
            raise ConfigurationError("dt and T must be positive")
        if self.T / self.dt < 10 - 1e-9:
            raise ConfigurationError("horizon must cover at least 10 steps")
        if self.integrator not in _METHODS:
            raise ConfigurationError(f"integrator must be one of {sorted(_METHODS)}")
        if int(self.log_decimation) < 1:
            raise ConfigurationError("log_decimation must be a positive integer")
        self.log_decimation = int(self.log_decimation)

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))


@dataclass
class TimeSeriesLog:
    """Sampled trajectory.

    ``states`` holds the full closed-loop state at every sample and
    ``signals`` the architecture's named signals (see ``signal_names``).
    """

    t: np.ndarray
    states: np.ndarray
    signals: np.ndarray = None
    signal_names: list = field(default_factory=list)
    diverged: bool = False
    t_diverge: float = None
    horizon: float = None
    system: object = None

    def signal(self, name):
        return self.signals[:, self.signal_names.index(name)]

    def error_norm(self):
        """Magnitude of the tracking error at every sample."""
        cols = getattr(self.system, "error_columns", None)
        if not cols:
            raise ValueError("log does not carry tracking-error signals")
        return np.sqrt(sum(self.signal(c) ** 2 for c in cols))

    def loop_blocks(self, i):
        """Named arrays (theta, P, A, b, ...) of loop ``i`` over time."""
        return self.system.loops[i].unpack(self.system.loop_segment(self.states, i))

    def columns(self):
        """Ordered ``{name: column}`` for CSV output."""
        cols = {"t": self.t}
        for name, col in zip(self.signal_names, self.signals.T):
            cols[name] = col
        if self.system is not None:
            for i, (lname, lp) in enumerate(zip(self.system.loop_names, self.system.loops)):
                blocks = self.loop_blocks(i)
                for gname, gcol in zip(lp.gain_names, blocks["theta"].T):
                    cols[f"theta_{lname}_{gname}"] = gcol
                P = blocks["P"]
                cols[f"trP_{lname}"] = np.trace(P, axis1=-2, axis2=-1)
                cols[f"mineigP_{lname}"] = np.linalg.eigvalsh(P).min(axis=-1) if len(P) else np.empty(0)
        return cols


@dataclass
class Metrics:
    iae: float
    ise: float
    final_error: float
    diverged: bool = False
    t_diverge: float = None

    def as_dict(self):
        return {
            "iae": self.iae, "ise": self.ise, "final_error": self.final_error,
            "diverged": self.diverged, "t_diverge": self.t_diverge,
        }


@njit(cache=True)
def _symmetrize(x, blocks):
    for k in range(blocks.shape[0]):
        o, n = blocks[k, 0], blocks[k, 1]
        for i in range(n):
            for j in range(i + 1, n):
                a = o + i * n + j
                b = o + j * n + i
                m = 0.5 * (x[a] + x[b])
                x[a] = m
                x[b] = m


@njit(cache=True)
def _all_finite(x):
    for v in x:
        if not np.isfinite(v):
            return False
    return True


@njit(cache=True)
def _run(rhs, x0, dt, n_steps, decim, blocks, method, args):
    x = x0.copy()
    k1, s = rhs(0.0, x, *args)
    n_log = n_steps // decim + 1
    T = np.empty(n_log)
    X = np.empty((n_log, x.shape[0]))
    S = np.empty((n_log, s.shape[0]))
    j = 0
    bad = -1.0
    for i in range(n_steps + 1):
        t = i * dt
        k1, s = rhs(t, x, *args)
        if i % decim == 0:
            T[j] = t
            X[j] = x
            S[j] = s
            j += 1
        if i == n_steps:
            break
        if method == 0:
            k2, _ = rhs(t + 0.5 * dt, x + 0.5 * dt * k1, *args)
            k3, _ = rhs(t + 0.5 * dt, x + 0.5 * dt * k2, *args)
            k4, _ = rhs(t + dt, x + dt * k3, *args)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            x = x + dt * k1
        _symmetrize(x, blocks)
        if not _all_finite(x):
            bad = (i + 1) * dt
            break
    return T[:j], X[:j], S[:j], bad


def _run_python(f, x0, dt, n_steps, decim, method):
    x = np.array(x0, dtype=float)
    ts, xs = [], []
    bad = -1.0
    for i in range(n_steps + 1):
        t = i * dt
        if i % decim == 0:
            ts.append(t)
            xs.append(x.copy())
        if i == n_steps:
            break
        k1 = np.asarray(f(t, x), dtype=float)
        if method == RK4:
            k2 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k1), dtype=float)
            k3 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k2), dtype=float)
            k4 = np.asarray(f(t + dt, x + dt * k3), dtype=float)
            with np.errstate(over="ignore", invalid="ignore"):
                x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                x = x + dt * k1
        if not np.all(np.isfinite(x)):
            bad = (i + 1) * dt
            break
    return np.array(ts), np.array(xs).reshape(len(ts), -1), bad


def integrate(system, x0=None, cfg=None):
    """Integrate a closed loop (or any ``f(t, x) -> dx``) on a fixed grid.

    ``system`` is either a :class:`ctrcac.architectures.ClosedLoopSystem`,
    which runs compiled and logs its named signals, or a plain Python
    callable.  A non-finite state ends the run early; the returned log then
    has ``diverged=True`` and ``t_diverge`` set to the first bad time.
    Covariance blocks of closed loops are symmetrized after every step.
    """
    cfg = SimConfig() if cfg is None else cfg
    method = _METHODS[cfg.integrator]
    kernel = getattr(system, "kernel", None)
    if kernel is not None:
        x0 = system.initial_state() if x0 is None else np.asarray(x0, dtype=float)
        if not np.all(np.isfinite(x0)):
            raise ConfigurationError("initial state must be finite")
        with np.errstate(all="ignore"):
            t, X, S, bad = _run(
                kernel, np.ascontiguousarray(x0, dtype=float), cfg.dt, cfg.n_steps,
                cfg.log_decimation, system.symmetric_blocks(), method, system.args,
            )
        return TimeSeriesLog(
            t=t, states=X, signals=S, signal_names=list(system.signal_names),
            diverged=bad >= 0, t_diverge=bad if bad >= 0 else None,
            horizon=cfg.T, system=system,
        )
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not np.all(np.isfinite(x0)):
        raise ConfigurationError("initial state must be finite")
    t, X, bad = _run_python(system, x0, cfg.dt, cfg.n_steps, cfg.log_decimation, method)
    return TimeSeriesLog(
        t=t, states=X, diverged=bad >= 0, t_diverge=bad if bad >= 0 else None, horizon=cfg.T,
    )


def compute_metrics(log, error=None, final_fraction=0.1):
    """IAE, ISE (trapezoidal) and mean ``|error|`` over the trailing samples.

    ``error`` defaults to the log's tracking-error magnitude.
    """
    if len(log.t) == 0:
        raise ValueError("empty log")
    e = np.abs(log.error_norm() if error is None else np.asarray(error, dtype=float))
    iae = float(np.trapezoid(e, log.t)) if len(e) > 1 else 0.0
    ise = float(np.trapezoid(e ** 2, log.t)) if len(e) > 1 else 0.0
    n_tail = max(1, int(round(final_fraction * len(e))))
    final = float(e[-n_tail:].mean())
    return Metrics(iae=iae, ise=ise, final_error=final, diverged=log.diverged, t_diverge=log.t_diverge)
