import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopinv import (
    DivergenceError,
    ForcingSignal,
    InvalidArgumentError,
    SystemSpec,
    TrajectoryDataset,
    angular_momentum,
    integrate,
    integrate_ensemble,
    kinetic_energy,
    linear_decay,
    paper_forcing,
    rigid_body,
    rigid_body_rhs,
    sample_momentum_shell,
    sample_momentum_sphere,
)
from koopinv.systems import euler_coefficients

from conftest import INERTIA


def test_euler_coefficients_hand_values():
    # (1/2-1/3)/(1/6) = 1, (1/3-1)/(1/3) = -2, (1-1/2)/(1/2) = 1
    np.testing.assert_allclose(euler_coefficients(INERTIA), [1.0, -2.0, 1.0], atol=1e-14)


@pytest.mark.parametrize(
    "Pi, tau, expected",
    [
        ((1, 0, 0), (0, 0, 0), (0, 0, 0)),
        ((1, 1, 1), (0, 0, 0), (1, -2, 1)),
        ((1, 1, 1), (1, 0, 0), (2, -2, 1)),
    ],
)
def test_rigid_body_rhs_examples(Pi, tau, expected):
    np.testing.assert_allclose(rigid_body_rhs(Pi, tau, INERTIA), expected, atol=1e-14)


def test_rigid_body_rhs_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        rigid_body_rhs((1, 1, 1), (0, 0, 0), (1, 0, 1))
    with pytest.raises(InvalidArgumentError):
        rigid_body_rhs((1, np.nan, 1), (0, 0, 0), INERTIA)


def test_rhs_matches_cross_product_form(rng):
    # xdot = Pi x Omega with Omega = Pi / I
    for _ in range(20):
        P = rng.standard_normal(3)
        want = np.cross(P, P / np.asarray(INERTIA))
        np.testing.assert_allclose(rigid_body_rhs(P, np.zeros(3), INERTIA), want, atol=1e-12)


def test_system_spec_validation():
    with pytest.raises(InvalidArgumentError):
        SystemSpec("rigid_body", 3, 3, np.eye(2), {"I1": 1, "I2": 1, "I3": 1})
    with pytest.raises(InvalidArgumentError):
        rigid_body((1.0, -0.5, 1.0))
    with pytest.raises(InvalidArgumentError):
        SystemSpec("nope", 1, 0, np.zeros((1, 0)))
    with pytest.raises(InvalidArgumentError):
        SystemSpec("linear_decay", 0, 0, np.zeros((0, 0)), {"rate": 1.0})


def test_equilibrium_is_constant(body):
    ds = integrate(body, [1.0, 0.0, 0.0], t_end=10.0, dt=0.01)
    assert ds.m == 1001
    assert np.all(ds.states == np.array([1.0, 0.0, 0.0]))


def test_linear_decay_closed_form():
    ds = integrate(linear_decay(1), [1.0], t_end=1.0, dt=0.01)
    assert abs(ds.states[-1, 0] - math.exp(-1.0)) <= 1e-8


def test_custom_drift_goes_through_generic_stepper():
    spec = SystemSpec("custom", 2, 0, np.zeros((2, 0)), {}, drift=lambda x, p: np.stack([x[..., 1], -x[..., 0]], -1))
    ds = integrate(spec, [1.0, 0.0], t_end=1.0, dt=0.001)
    np.testing.assert_allclose(ds.states[-1], [math.cos(1.0), -math.sin(1.0)], atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1))
def test_unforced_conservation(v):
    body = rigid_body(INERTIA)
    x0 = np.asarray(v) / np.linalg.norm(v)
    X = integrate(body, x0, t_end=10.0, dt=0.01).states
    assert np.max(np.abs(angular_momentum(X) - angular_momentum(x0))) <= 1e-8
    assert np.max(np.abs(kinetic_energy(X, INERTIA) - kinetic_energy(x0, INERTIA))) <= 1e-8


def test_rk4_order_factor(body):
    x0 = np.array([0.3, 0.8, -0.5])
    ref = integrate(body, x0, t_end=1.0, dt=1e-4).states[-1]
    e1 = np.linalg.norm(integrate(body, x0, t_end=1.0, dt=0.04).states[-1] - ref)
    e2 = np.linalg.norm(integrate(body, x0, t_end=1.0, dt=0.02).states[-1] - ref)
    assert 14.0 <= e1 / e2 <= 18.0


def test_forced_integration_uses_half_step_inputs(body):
    # generic stepper evaluates forcing at t, t+h/2, t+h; both paths must agree
    custom = SystemSpec("custom", 3, 3, np.eye(3), dict(body.parameters), drift=lambda x, p: body.f(x))
    a = integrate(body, [0.2, 0.5, 0.1], paper_forcing(), t_end=1.0, dt=0.01)
    b = integrate(custom, [0.2, 0.5, 0.1], paper_forcing(), t_end=1.0, dt=0.01)
    np.testing.assert_allclose(a.states, b.states, atol=1e-13)
    np.testing.assert_allclose(a.derivatives, body.rhs(a.states, a.inputs), atol=1e-14)


def test_divergence_guard():
    spec = linear_decay(1, rate=-50.0)
    with pytest.raises(DivergenceError) as exc:
        integrate(spec, [1.0], t_end=1.0, dt=0.01, guard=1e6)
    assert exc.value.time > 0


def test_integrate_arguments(body):
    with pytest.raises(InvalidArgumentError):
        integrate(body, [1.0, 0.0], t_end=1.0)
    with pytest.raises(InvalidArgumentError):
        integrate(body, [1.0, 0.0, 0.0], t_end=0.015, dt=0.01)
    with pytest.raises(InvalidArgumentError):
        integrate(body, [1.0, 0.0, 0.0], forcing=ForcingSignal(lambda t: np.zeros((len(t), 2)), 2))
    ds = integrate(body, [1.0, 0.2, 0.0], t_end=0.01, dt=0.01)
    assert ds.m == 2


def test_ensemble_parallel_matches_serial(body):
    X0 = sample_momentum_shell(4, seed=1)
    a = integrate_ensemble(body, X0, t_end=1.0, jobs=1)
    b = integrate_ensemble(body, X0, t_end=1.0, jobs=2)
    for u, v in zip(a, b):
        assert np.array_equal(u.states, v.states)


def test_sphere_sampling():
    P = sample_momentum_sphere(0.5, 114, seed=4)
    assert P.shape == (114, 3)
    assert np.max(np.abs(angular_momentum(P) - 0.5)) <= 1e-12
    assert np.array_equal(P, sample_momentum_sphere(0.5, 114, seed=4))
    assert not np.array_equal(P, sample_momentum_sphere(0.5, 114, seed=5))
    one = sample_momentum_sphere(0.5, 1, seed=9)
    assert one.shape == (1, 3) and abs(np.linalg.norm(one) - 1.0) <= 1e-12
    # near-uniform: centroid close to origin
    assert np.linalg.norm(P.mean(axis=0)) < 0.05
    with pytest.raises(InvalidArgumentError):
        sample_momentum_sphere(0.0, 3)


def test_shell_sampling_radii():
    P = sample_momentum_shell(200, seed=0, radii=(0.5, 1.5))
    r = np.linalg.norm(P, axis=1)
    assert r.min() >= 0.5 and r.max() <= 1.5
    assert np.ptp(r) > 0.5


def test_forcing_values():
    f = paper_forcing()
    np.testing.assert_allclose(f(0.0), [0.125, 0.5, 0.0], atol=1e-15)
    assert abs(f(math.pi / 20)[2]) <= 1e-15
    U = f(np.linspace(0, 10, 20001))
    assert U.shape == (20001, 3)
    assert np.all(np.abs(U) <= np.array([3.375, 1.5, 1.0]) + 1e-12)


def test_dataset_is_immutable_and_validated():
    ds = TrajectoryDataset([0.0, 1.0], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        ds.states[0, 0] = 5.0
    with pytest.raises(InvalidArgumentError):
        TrajectoryDataset([0.0, 0.0], [[1.0], [2.0]])
    with pytest.raises(InvalidArgumentError):
        TrajectoryDataset([0.0, 1.0], [[1.0], [np.inf]])
    with pytest.raises(InvalidArgumentError):
        TrajectoryDataset([0.0, 1.0], [[1.0], [2.0]], derivatives=[[1.0]])
    assert TrajectoryDataset([0.0, 1.0], [[1.0], [2.0]], [[1.0], [1.0]]).derivative_scheme == "given"
