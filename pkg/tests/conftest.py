"""Shared helpers: cached preset simulations (each one costs seconds)."""

import functools

import numpy as np
import pytest

from ctrcac.scenario import build_system, load_scenario, preset_names
from ctrcac.simulate import integrate

DOUBLE_INTEGRATOR = [
    "double-integrator-tf2",
    "double-integrator-pid",
    "double-integrator-ppi",
    "double-integrator-fsfi",
]


@functools.lru_cache(maxsize=None)
def run_preset(name, dt=None, decimation=None):
    """Simulate a bundled preset once per (dt, decimation) and cache the log."""
    scn = load_scenario(name).model_copy(deep=True)
    if dt is not None:
        scn.sim.dt = dt
    if decimation is not None:
        scn.sim.log_decimation = decimation
    system = build_system(scn)
    return integrate(system, cfg=scn.sim_config())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ALL_PRESETS = preset_names()



def pytest_terminal_summary(terminalreporter):
    from _report import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
