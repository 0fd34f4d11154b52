import numpy as np
import pytest

from ctrcac.simulate import SimConfig, TimeSeriesLog, compute_metrics, integrate
from ctrcac.validation import ConfigurationError

from conftest import run_preset


def _exp_error(dt):
    log = integrate(lambda t, x: -x, x0=[1.0], cfg=SimConfig(dt=dt, T=1.0, log_decimation=1))
    return abs(log.states[-1, 0] - np.exp(-1.0))


def test_constant_trajectory():
    log = integrate(lambda t, x: np.zeros(2), x0=[1.0, -2.0], cfg=SimConfig(dt=0.1, T=1.0))
    assert np.all(log.states == [1.0, -2.0])


def test_exponential_probe():
    assert _exp_error(1e-3) / np.exp(-1.0) <= 1e-10


def test_rk4_observed_order():
    dts = [0.1, 0.05, 0.025]
    errs = [_exp_error(dt) for dt in dts]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 3.8


def test_euler_is_first_order():
    def err(dt):
        log = integrate(lambda t, x: -x, x0=[1.0], cfg=SimConfig(dt=dt, T=1.0, integrator="euler"))
        return abs(log.states[-1, 0] - np.exp(-1.0))

    assert np.log2(err(0.01) / err(0.005)) == pytest.approx(1.0, abs=0.05)


def test_finite_time_blow_up_is_flagged():
    with np.errstate(over="ignore", invalid="ignore"):
        log = integrate(lambda t, x: x ** 2, x0=[1.0], cfg=SimConfig(dt=1e-3, T=2.0))
    assert log.diverged
    assert 0.9 <= log.t_diverge <= 1.1


def test_decimation_and_final_sample():
    log = integrate(lambda t, x: -x, x0=[1.0], cfg=SimConfig(dt=1e-3, T=1.0, log_decimation=10))
    assert len(log.t) == 101
    assert log.t[-1] == pytest.approx(1.0)
    assert np.all(np.diff(log.t) > 0)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SimConfig(dt=0.5, T=1.0)
    with pytest.raises(ConfigurationError):
        SimConfig(integrator="rk45")
    with pytest.raises(ConfigurationError):
        SimConfig(log_decimation=0)
    with pytest.raises(ConfigurationError):
        integrate(lambda t, x: x, x0=[np.nan])


def _log(t, e):
    return TimeSeriesLog(t=t, states=np.zeros((len(t), 1)))


def test_metrics_constant_and_zero():
    t = np.linspace(0, 10, 1001)
    m = compute_metrics(_log(t, None), error=np.ones_like(t))
    assert m.iae == pytest.approx(10.0) and m.ise == pytest.approx(10.0)
    m = compute_metrics(_log(t, None), error=np.zeros_like(t))
    assert m.iae == 0 and m.ise == 0 and m.final_error == 0


def test_metrics_exponential():
    t = np.linspace(0, 10, 10001)
    m = compute_metrics(_log(t, None), error=np.exp(-t))
    assert abs(m.iae - (1 - np.exp(-10))) <= 1e-4
    assert abs(m.ise - (1 - np.exp(-20)) / 2) <= 1e-4


def test_compiled_run_is_deterministic():
    a = run_preset("double-integrator-tf2")
    b = run_preset("double-integrator-tf2", decimation=10)
    np.testing.assert_array_equal(a.states, b.states)


def test_closed_loop_log_columns():
    log = run_preset("double-integrator-pid")
    cols = log.columns()
    assert list(cols)[:5] == ["t", "r", "y", "z", "u"]
    assert {"theta_loop_kp", "theta_loop_ki", "theta_loop_kd", "trP_loop", "mineigP_loop"} <= set(cols)
    assert all(len(c) == len(log.t) for c in cols.values())
