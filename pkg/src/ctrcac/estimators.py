"""Estimator-style wrappers around scenario simulation and tuning.

Both classes follow the scikit-learn conventions: constructor arguments are
stored unchanged, ``fit`` does the work and sets trailing-underscore
attributes, and ``get_params``/``set_params`` come from ``BaseEstimator``.
Neither learns from a data matrix, so ``X`` and ``y`` are accepted and
ignored in ``fit``.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .pso import pso_optimize, scenario_search, score_scenario
from .scenario import Scenario, build_system, load_scenario
from .simulate import compute_metrics, integrate


def _resolve(scenario):
    if isinstance(scenario, Scenario):
        return scenario
    return load_scenario(scenario)


class ScenarioSimulator(BaseEstimator):
    """Run one scenario.

    Parameters
    ----------
    scenario : str, path or Scenario
        Preset name, scenario file or an already loaded scenario.
    P0, p_f : float, optional
        Override the hyperparameters of every loop.
    dt, T : float, optional
        Override the step size and horizon.

    Attributes
    ----------
    scenario_ : Scenario
        The resolved scenario that was run.
    log_ : TimeSeriesLog
    metrics_ : Metrics
    theta_ : dict
        Final gains per loop name.
    """

    def __init__(self, scenario="double-integrator-pid", P0=None, p_f=None, dt=None, T=None):
        self.scenario = scenario
        self.P0 = P0
        self.p_f = p_f
        self.dt = dt
        self.T = T

    def _scenario(self):
        scn = _resolve(self.scenario)
        if self.P0 is not None or self.p_f is not None:
            scn = scn.with_hyperparameters(P0=self.P0, p_f=self.p_f)
        if self.dt is not None or self.T is not None:
            scn = scn.model_copy(deep=True)
            if self.dt is not None:
                scn.sim.dt = float(self.dt)
            if self.T is not None:
                scn.sim.T = float(self.T)
        return scn

    def fit(self, X=None, y=None):
        scn = self._scenario()
        system = build_system(scn)
        log = integrate(system, cfg=scn.sim_config())
        self.scenario_ = scn
        self.system_ = system
        self.log_ = log
        self.metrics_ = compute_metrics(log)
        self.theta_ = {
            name: log.loop_blocks(i)["theta"][-1].copy()
            for i, name in enumerate(system.loop_names)
        }
        return self

    def predict(self, X):
        """Logged signals linearly interpolated at the times ``X``.

        Returns an array of shape ``(len(X), n_signals)`` with columns in
        ``log_.signal_names`` order.
        """
        check_is_fitted(self, "log_")
        t = np.asarray(X, dtype=float).ravel()
        log = self.log_
        return np.column_stack([np.interp(t, log.t, col) for col in log.signals.T])

    def score(self, X=None, y=None):
        """Negative IAE of the tracking error (higher is better)."""
        check_is_fitted(self, "metrics_")
        return -self.metrics_.iae


class PSOTuner(BaseEstimator):
    """Particle swarm search over ``(log10 P0, p_f)`` for a scenario.

    Unset swarm options fall back to the scenario's ``tune`` section.

    Attributes
    ----------
    best_params_ : dict
        ``{"log10_P0": ..., "p_f": ...}``.
    best_score_ : float
    result_ : PSOResult
        Full search record, including the per-iteration history.
    """

    def __init__(self, scenario="double-integrator-pid", swarm_size=None, iterations=None,
                 seed=None, executor=None):
        self.scenario = scenario
        self.swarm_size = swarm_size
        self.iterations = iterations
        self.seed = seed
        self.executor = executor

    def fit(self, X=None, y=None):
        scn = _resolve(self.scenario)
        space, cfg = scenario_search(scn, self.swarm_size, self.iterations, self.seed)

        def objective(point):
            return score_scenario(scn, point)

        res = pso_optimize(objective, space, cfg, executor=self.executor)
        self.scenario_ = scn
        self.space_ = space
        self.result_ = res
        self.best_params_ = dict(zip(space.names, (float(v) for v in res.best_position)))
        self.best_score_ = res.best_score
        return self

    def score(self, X=None, y=None):
        check_is_fitted(self, "best_score_")
        return -self.best_score_
