import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctrcac.core import (
    AdaptationState,
    Dimensions,
    FilterRealization,
    Hyperparameters,
    adaptation_derivative,
    control_output,
    evaluate_cost,
    filter_derivative,
    init_adaptation,
    oracle_derivative,
    oracle_gains,
    retrospective_performance,
    stationarity_residual,
)
from ctrcac.simulate import SimConfig, integrate
from ctrcac.validation import ConfigurationError, DivergenceError


def scalar_hp(n, R_theta=1.0, R_z=1.0, R_u=0.0):
    return Hyperparameters(R_z=[[R_z]], R_u=[[R_u]], R_theta=R_theta * np.eye(n))


# --- initialization ---------------------------------------------------------


def test_identity_weight_gives_identity_covariance():
    st_ = init_adaptation(Dimensions(1, 1, 2), scalar_hp(2), FilterRealization.first_order(1.0))
    assert np.array_equal(st_.P, np.eye(2))
    assert np.array_equal(st_.theta, np.zeros(2))


def test_covariance_role_reproduces_scalar_P0():
    dims = Dimensions(1, 1, 4)
    hp = Hyperparameters.from_scalars(dims, 10 ** 0.6, p0_role="covariance")
    st_ = init_adaptation(dims, hp, FilterRealization.first_order(8.15))
    np.testing.assert_allclose(st_.P, 10 ** 0.6 * np.eye(4), rtol=1e-15)


def test_weight_role_inverts_scalar_P0():
    dims = Dimensions(1, 1, 3)
    hp = Hyperparameters.from_scalars(dims, 10 ** -1.02)
    np.testing.assert_allclose(hp.R_theta, 10 ** -1.02 * np.eye(3))
    st_ = init_adaptation(dims, hp, FilterRealization.first_order(1.0))
    np.testing.assert_allclose(st_.P, 10 ** 1.02 * np.eye(3), rtol=1e-14)


def test_diagonal_weight_inverse():
    hp = Hyperparameters(R_z=[[1.0]], R_u=[[0.0]], R_theta=np.diag([2.0, 4.0]))
    st_ = init_adaptation(Dimensions(1, 1, 2), hp, FilterRealization.first_order(1.0))
    np.testing.assert_allclose(st_.P, np.diag([0.5, 0.25]), rtol=0, atol=1e-15)
    np.testing.assert_array_equal(st_.oracle_A, hp.R_theta)


def test_bad_weights_rejected():
    with pytest.raises(ConfigurationError):
        Hyperparameters(R_z=[[1.0]], R_u=[[0.0]], R_theta=np.diag([1.0, 0.0]))
    with pytest.raises(ConfigurationError):
        Hyperparameters(R_z=[[0.0]], R_u=[[0.0]], R_theta=np.eye(2))
    with pytest.raises(ConfigurationError):
        Hyperparameters(R_z=[[1.0]], R_u=[[-1.0]], R_theta=np.eye(2))
    with pytest.raises(ConfigurationError):
        Hyperparameters.from_scalars(Dimensions(1, 1, 2), 1.0, p0_role="other")
    with pytest.raises(ConfigurationError):
        init_adaptation(Dimensions(1, 1, 3), scalar_hp(2), FilterRealization.first_order(1.0))


def test_filter_must_be_hurwitz():
    with pytest.raises(ConfigurationError):
        FilterRealization(A_f=[[1.0]], B_f=[[1.0]], C_f=[[1.0]], D_f=[[0.0]])
    with pytest.raises(ConfigurationError):
        FilterRealization.first_order(0.0)


# --- control output and retrospective performance --------------------------


def test_control_output():
    np.testing.assert_array_equal(control_output([[1, 2]], [3, 4]), [11.0])
    np.testing.assert_array_equal(control_output(np.eye(2), [5, -1]), [5.0, -1.0])
    np.testing.assert_array_equal(control_output([[7.0, -2.0]], [0, 0]), [0.0])
    with pytest.raises(ValueError):
        control_output([[1, 2]], [1, 2, 3])


def test_retrospective_performance():
    assert retrospective_performance([1.0], [[2.0]], [3.0], [4.0])[0] == 3.0
    assert retrospective_performance([1.5], [[2.0]], [0.0], [0.0])[0] == 1.5
    assert retrospective_performance([1.5], [[2.0]], [2.0], [4.0])[0] == 1.5


# --- filter -----------------------------------------------------------------


def test_filter_zero_and_static():
    f = FilterRealization.first_order(3.0)
    dx, y = filter_derivative(f, np.zeros(1), np.zeros(1))
    assert np.all(dx == 0) and np.all(y == 0)
    static = FilterRealization(A_f=np.zeros((0, 0)), B_f=np.zeros((0, 1)),
                               C_f=np.zeros((1, 0)), D_f=[[1.0]])
    assert static.n_f == 0
    _, y = filter_derivative(static, np.zeros(0), np.array([2.5]))
    assert y[0] == 2.5


@pytest.mark.parametrize("p_f", [0.5, 2.0, 8.15])
def test_first_order_step_response(p_f):
    # independent closed form of x' = -p_f x + w, x(0) = 0
    w = 1.7
    f = FilterRealization.first_order(p_f)

    def rhs(t, x):
        return filter_derivative(f, x, np.array([w]))[0]

    log = integrate(rhs, x0=[0.0], cfg=SimConfig(dt=1e-3, T=10.0, log_decimation=1))
    for t in (0.1, 1.0, 10.0):
        i = int(round(t / 1e-3))
        exact = w * (1 - np.exp(-p_f * t)) / p_f
        assert abs(log.states[i, 0] - exact) <= 1e-10 * max(1.0, abs(exact))


def test_filter_acts_column_wise():
    f = FilterRealization.first_order(2.0)
    x = np.array([[0.5, -1.0, 0.25]])
    Phi = np.array([[1.0, 2.0, 3.0]])
    dx, out = filter_derivative(f, x, Phi)
    for j in range(3):
        dxj, outj = filter_derivative(f, x[:, j], Phi[:, j])
        assert dx[0, j] == dxj[0] and out[0, j] == outj[0]


# --- adaptation ODE -----------------------------------------------------------


def _state(theta, P):
    n = len(theta)
    return AdaptationState(theta=np.asarray(theta, float), P=np.asarray(P, float),
                           x_Phi=np.zeros((1, n)), x_u=np.zeros(1),
                           oracle_A=np.eye(n), oracle_b=np.zeros(n), oracle_c=0.0)


def test_zero_excitation_freezes_gains():
    s = _state([0.3, -2.0], [[2.0, 0.1], [0.1, 1.0]])
    td, Pd = adaptation_derivative(s, [0.7], np.zeros((1, 2)), np.zeros((1, 2)), [0.0],
                                   scalar_hp(2, R_u=0.5))
    assert np.all(td == 0.0) and np.all(Pd == 0.0)


def test_scalar_substitution():
    s = _state([0.0], [[1.0]])
    td, Pd = adaptation_derivative(s, [1.0], [[0.0]], [[1.0]], [0.0], scalar_hp(1))
    assert td[0] == -1.0 and Pd[0, 0] == -1.0


def test_non_finite_inputs_raise():
    s = _state([0.0], [[1.0]])
    with pytest.raises(DivergenceError):
        adaptation_derivative(s, [np.nan], [[0.0]], [[1.0]], [0.0], scalar_hp(1))


@pytest.mark.parametrize("t", [0.5, 1.0, 5.0])
def test_scalar_riccati_solution(t):
    c, P0 = 2.0, 10.0
    hp = scalar_hp(1)

    def rhs(_t, x):
        s = _state([x[0]], [[x[1]]])
        td, Pd = adaptation_derivative(s, [0.0], [[0.0]], [[c]], [0.0], hp)
        return np.array([td[0], Pd[0, 0]])

    log = integrate(rhs, x0=[0.0, P0], cfg=SimConfig(dt=1e-4, T=t, log_decimation=1))
    exact = P0 / (1 + P0 * c * c * t)
    assert log.t[-1] == pytest.approx(t)
    assert abs(log.states[-1, 1] - exact) <= 1e-8 * exact


@settings(max_examples=60, deadline=None)
@given(
    P_root=arrays(float, (3, 3), elements=st.floats(-2, 2)),
    Phi_f=arrays(float, (1, 3), elements=st.floats(-5, 5)),
    Phi=arrays(float, (1, 3), elements=st.floats(-5, 5)),
    r_u=st.floats(0, 3),
)
def test_covariance_rate_is_negative_semidefinite(P_root, Phi_f, Phi, r_u):
    P = P_root @ P_root.T + 0.1 * np.eye(3)
    s = _state(np.zeros(3), P)
    _, Pd = adaptation_derivative(s, [0.0], Phi, Phi_f, [0.0], scalar_hp(3, R_u=r_u))
    np.testing.assert_allclose(Pd, Pd.T, atol=1e-9 * max(1.0, np.abs(Pd).max()))
    assert np.linalg.eigvalsh(Pd).max() <= 1e-9 * max(1.0, np.abs(Pd).max())


@settings(max_examples=60, deadline=None)
@given(
    theta=arrays(float, (2,), elements=st.floats(-3, 3)),
    Phi_f=arrays(float, (1, 2), elements=st.floats(-3, 3)),
    z=st.floats(-3, 3), u_f=st.floats(-3, 3),
)
def test_gain_rate_descends_the_instantaneous_cost(theta, Phi_f, z, u_f):
    # d/dtheta of 0.5 |z + Phi_f theta - u_f|^2 is Phi_f^T (z + Phi_f theta - u_f)
    P = np.array([[1.5, 0.2], [0.2, 0.7]])
    s = _state(theta, P)
    td, _ = adaptation_derivative(s, [z], np.zeros((1, 2)), Phi_f, [u_f], scalar_hp(2))
    grad = Phi_f[0] * (z + Phi_f[0] @ theta - u_f)
    np.testing.assert_allclose(td, -P @ grad, atol=1e-12)
    assert grad @ td <= 1e-12


# --- oracle accumulators --------------------------------------------------------


def test_oracle_rates_arithmetic():
    s = _state([0.0], [[1.0]])
    A, b, c = oracle_derivative(s, [2.0], [[0.0]], [[1.0]], [0.0], scalar_hp(1))
    assert A[0, 0] == 1.0 and b[0] == 2.0 and c == 4.0
    A, b, c = oracle_derivative(s, [0.0], [[0.0]], [[0.0]], [0.0], scalar_hp(1))
    assert A[0, 0] == 0.0 and b[0] == 0.0 and c == 0.0


def test_cost_evaluation():
    s = _state([0.0, 0.0], np.eye(2))
    s.oracle_c = 2.5
    assert evaluate_cost([0.0, 0.0], s) == 2.5
    s.oracle_c = 0.0
    assert evaluate_cost([1.0, 1.0], s) == 2.0


def _open_loop_run(T=5.0, dt=1e-3, p_f=1.5, R_u=0.3):
    """theta, P and independently integrated accumulators for fixed signals.

    The accumulator rates are written out here with plain numpy so they do
    not share code with the library's oracle kernel.
    """
    n = 2
    f = FilterRealization.first_order(p_f)
    hp = Hyperparameters(R_z=[[1.0]], R_u=[[R_u]], R_theta=np.diag([0.5, 2.0]))
    s0 = init_adaptation(Dimensions(1, 1, n), hp, f)

    def signals(t):
        return np.array([[np.sin(t), np.cos(2 * t) + 0.5]]), np.array([np.exp(-0.3 * t) * np.cos(t)])

    def unpack(x):
        return x[0:2].reshape(1, 2), x[2:3], x[3:5], x[5:9].reshape(2, 2), x[9:13].reshape(2, 2), x[13:15], x[15]

    def rhs(t, x):
        xPhi, xu, th, P, A, b, c = unpack(x)
        Phi, z = signals(t)
        u = Phi @ th
        dxPhi, Phi_f = filter_derivative(f, xPhi, Phi)
        dxu, u_f = filter_derivative(f, xu, u)
        s = AdaptationState(theta=th, P=P, x_Phi=xPhi, x_u=xu, oracle_A=A, oracle_b=b, oracle_c=c)
        td, Pd = adaptation_derivative(s, z, Phi, Phi_f, u_f, hp)
        w = z - u_f
        Ad = Phi_f.T @ Phi_f + R_u * Phi.T @ Phi
        bd = Phi_f.T @ w
        cd = w @ w
        return np.concatenate([dxPhi.ravel(), dxu, td, Pd.ravel(), Ad.ravel(), bd, [cd]])

    x0 = np.concatenate([s0.x_Phi.ravel(), s0.x_u, s0.theta, s0.P.ravel(),
                         s0.oracle_A.ravel(), s0.oracle_b, [s0.oracle_c]])
    log = integrate(rhs, x0=x0, cfg=SimConfig(dt=dt, T=T, log_decimation=100))
    return [unpack(x) for x in log.states]


def test_gains_track_cost_minimizer_along_trajectory():
    for xPhi, xu, th, P, A, b, c in _open_loop_run():
        resid = np.linalg.norm(th - oracle_gains(A, b)) / (1 + np.linalg.norm(th))
        assert resid <= 1e-9
        assert stationarity_residual(A, b, th) <= 1e-9
        # P stays the inverse of the accumulated weight
        np.testing.assert_allclose(P @ A, np.eye(2), atol=1e-9)


def test_gains_minimize_accumulated_cost(rng):
    xPhi, xu, th, P, A, b, c = _open_loop_run(T=3.0)[-1]
    s = AdaptationState(theta=th, P=P, x_Phi=xPhi, x_u=xu, oracle_A=A, oracle_b=b, oracle_c=c)
    best = evaluate_cost(th, s)
    for _ in range(100):
        d = rng.normal(size=2)
        d *= 0.1 / np.linalg.norm(d)
        assert best <= evaluate_cost(th + d, s)
