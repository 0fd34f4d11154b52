"""Continuous-time retrospective cost adaptive control (CTRCAC).

The package provides the gain/covariance adaptation law, controller
parameterizations, plant models, closed-loop architectures, a fixed-step
simulator, a particle swarm tuner and a scenario-driven CLI.
"""

from .architectures import (
    AdaptiveLoop,
    AttitudeStack,
    BicopterAutopilot,
    CascadedPpiLoop,
    FsfiLoop,
    ServoLoop,
    SingleLoopSystem,
)
from .core import (
    AdaptationState,
    Dimensions,
    FilterRealization,
    Hyperparameters,
    adaptation_derivative,
    init_adaptation,
    oracle_gains,
)
from .estimators import PSOTuner, ScenarioSimulator
from .plants import Bicopter, DoubleIntegrator, RigidBody
from .pso import PSOResult, SearchSpace, SwarmConfig, pso_optimize, score_scenario
from .scenario import Scenario, build_system, load_scenario, preset_names
from .simulate import Metrics, SimConfig, TimeSeriesLog, compute_metrics, integrate
from .validation import ConfigurationError, DivergenceError, SingularityError

__version__ = "0.1.0"

__all__ = [
    "AdaptationState", "AdaptiveLoop", "AttitudeStack", "Bicopter", "BicopterAutopilot",
    "CascadedPpiLoop", "ConfigurationError", "Dimensions", "DivergenceError",
    "DoubleIntegrator", "FilterRealization", "FsfiLoop", "Hyperparameters", "Metrics",
    "PSOResult", "PSOTuner", "RigidBody", "Scenario", "ScenarioSimulator", "SearchSpace",
    "ServoLoop", "SimConfig", "SingleLoopSystem", "SingularityError", "SwarmConfig",
    "TimeSeriesLog", "adaptation_derivative", "build_system", "compute_metrics",
    "init_adaptation", "integrate", "load_scenario", "oracle_gains", "preset_names",
    "pso_optimize", "score_scenario",
]
