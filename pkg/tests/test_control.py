import warnings

import numpy as np
import pytest

from koopinv import (
    ControlModel,
    InvalidArgumentError,
    MpcConfig,
    UncontrollableWarning,
    build_dictionary,
    conserved_coordinates,
    control_gain_map,
    mpc_step,
    rigid_body,
    run_closed_loop,
    run_closed_loop_ensemble,
    sample_momentum_sphere,
)
from koopinv.control import _hold_step, horizon_cost, zoh_input

from conftest import INERTIA, analytic_LH

D2 = build_dictionary(3, 2)
PI_STAR = np.array([0.0, 1.0, 0.0])
R_NOM = 1e-3 * np.eye(3)


def config(R=R_NOM, **kw):
    return MpcConfig(Q=2 * np.eye(2), R=R, reference_state=PI_STAR, **kw)


@pytest.fixture(scope="module")
def model():
    return ControlModel(D2, np.column_stack(analytic_LH(D2)), np.eye(3), rigid_body(INERTIA))


def test_coordinates_at_reference(model):
    LH = np.column_stack(analytic_LH(D2))
    np.testing.assert_allclose(conserved_coordinates(D2, LH, PI_STAR), [0.5, 1.0], atol=1e-15)
    np.testing.assert_allclose(conserved_coordinates(D2, LH, -PI_STAR), [0.5, 1.0], atol=1e-15)
    np.testing.assert_array_equal(conserved_coordinates(D2, LH, np.zeros(3)), [0.0, 0.0])
    assert conserved_coordinates(D2, LH, np.ones((4, 3))).shape == (4, 2)


def test_gain_map(rng):
    L = analytic_LH(D2)[0][:, None]
    x = rng.standard_normal(3)
    np.testing.assert_allclose(control_gain_map(D2, L, np.eye(3), x), x[None, :], atol=1e-15)
    np.testing.assert_array_equal(control_gain_map(D2, L, np.eye(3), np.zeros(3)), 0.0)
    np.testing.assert_array_equal(control_gain_map(D2, L, np.zeros((3, 3)), x), 0.0)


def test_zero_error_gives_zero_input(model):
    assert np.array_equal(mpc_step(config(), model, PI_STAR), np.zeros(3))


def test_large_R_suppresses_input(model):
    x = np.array([0.6, 0.0, 0.8])
    u_nom = mpc_step(config(), model, x)
    u_big = mpc_step(config(R=R_NOM * 1e6), model, x)
    assert np.linalg.norm(u_nom) > 0
    assert np.linalg.norm(u_big) <= 1e-3 * np.linalg.norm(u_nom)


def test_scalar_case_against_grid_search():
    d1 = build_dictionary(1, 1)
    m = ControlModel(d1, np.array([[1.0]]), np.array([[1.0]]))
    cfg = MpcConfig(Q=[[2.0]], R=[[0.0]], reference_state=[1.0])
    u = mpc_step(cfg, m, np.array([0.0]))[0]
    assert u > 0
    grid = np.linspace(0.0, 400.0, 4_000_001)
    e, N, dt = -1.0, cfg.horizon_steps, cfg.plant_dt
    k = np.arange(1, N + 1) * dt
    J = dt * 2.0 * np.sum((e + np.outer(grid, k)) ** 2, axis=1)
    assert abs(u - grid[np.argmin(J)]) <= 1e-4


def test_closed_form_is_minimizer(rng):
    for _ in range(20):
        G, e = rng.standard_normal((2, 3)), rng.standard_normal(2)
        Q = np.diag(rng.uniform(0.5, 3, 2))
        R = np.diag(rng.uniform(1e-4, 1e-2, 3))
        u = zoh_input(e, G, Q, R, 10, 0.01)
        J0 = horizon_cost(e, G, u, Q, R, 10, 0.01)
        for _ in range(10):
            assert horizon_cost(e, G, u + 1e-3 * rng.standard_normal(3), Q, R, 10, 0.01) >= J0


def test_rebasis_invariance(model, rng):
    x = np.array([0.5, 0.3, -0.81])
    base = mpc_step(config(), model, x)
    R2, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    rotated = ControlModel(D2, model.coefficients @ R2, np.eye(3))
    cfg = MpcConfig(Q=R2.T @ (2 * np.eye(2)) @ R2, R=R_NOM, reference_state=PI_STAR)
    np.testing.assert_allclose(mpc_step(cfg, rotated, x), base, rtol=1e-9, atol=1e-12)


def test_uncontrollable_warning():
    m = ControlModel(D2, np.column_stack(analytic_LH(D2)), np.eye(3))
    with pytest.warns(UncontrollableWarning):
        u = mpc_step(config(), m, np.zeros(3))
    assert np.array_equal(u, np.zeros(3))


def test_input_bounds(model):
    x = np.array([0.6, 0.0, 0.8])
    u = mpc_step(config(input_bounds=[[-0.01, 0.01]] * 3), model, x)
    assert np.all(np.abs(u) <= 0.01)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        MpcConfig(Q=[[1.0, 0.0], [0.0, 0.0]], R=R_NOM, reference_state=PI_STAR)
    with pytest.raises(InvalidArgumentError):
        MpcConfig(Q=[[1.0, 2.0], [0.0, 1.0]], R=R_NOM, reference_state=PI_STAR)
    with pytest.raises(InvalidArgumentError):
        MpcConfig(Q=np.eye(2), R=-R_NOM, reference_state=PI_STAR)
    with pytest.raises(InvalidArgumentError):
        config(horizon_steps=0)
    with pytest.raises(InvalidArgumentError):
        config(prediction="newton")
    config(R=np.zeros((3, 3)))  # semidefinite R is allowed


def test_equilibrium_closed_loop(model):
    res = run_closed_loop(rigid_body(INERTIA), config(), model, PI_STAR, 1.0)
    assert not np.any(res.inputs)
    assert np.all(res.states == PI_STAR)
    assert res.converged and res.final_distance == 0.0


def test_result_series_consistent(model):
    res = run_closed_loop(rigid_body(INERTIA), config(), model, [0.6, 0.0, 0.8], 2.0)
    n = res.times.size
    assert n == 201
    assert res.states.shape == (n, 3) and res.inputs.shape == (n, 3)
    assert res.coordinates.shape == (n, 2) and res.cost.shape == (n,)
    assert np.all(res.cost >= 0)


def test_sign_flip_symmetry(model):
    # f(Sx) = S f(x) for S = diag(-1, -1, 1); C is even in every coordinate
    S = np.diag([-1.0, -1.0, 1.0])
    x0 = np.array([0.48, 0.6, -0.64])
    spec = rigid_body(INERTIA)
    a = run_closed_loop(spec, config(), model, x0, 2.0)
    b = run_closed_loop(spec, config(), model, S @ x0, 2.0)
    np.testing.assert_allclose(b.states, a.states @ S, atol=1e-12)
    np.testing.assert_allclose(b.inputs, a.inputs @ S, atol=1e-12)
    np.testing.assert_allclose(b.coordinates, a.coordinates, atol=1e-12)


def test_negating_the_state_is_not_a_symmetry(model):
    # the quadratic vector field is even: f(-x) = f(x), so -x0 does not mirror x0
    spec = rigid_body(INERTIA)
    x0 = np.array([0.48, 0.6, -0.64])
    a = run_closed_loop(spec, config(), model, x0, 1.0, controlled=False)
    b = run_closed_loop(spec, config(), model, -x0, 1.0, controlled=False)
    assert np.max(np.abs(b.states + a.states)) > 1e-2


def test_baseline_conserves_C(model):
    res = run_closed_loop(rigid_body(INERTIA), config(), model, [0.6, 0.0, 0.8], 10.0, controlled=False)
    assert np.max(np.ptp(res.coordinates, axis=0)) <= 1e-8
    assert not np.any(res.inputs)


@pytest.fixture(scope="module")
def small_ensemble(model):
    spec = rigid_body(INERTIA)
    X0 = sample_momentum_sphere(0.5, 8, seed=21)
    on = run_closed_loop_ensemble(spec, config(), model, X0, 10.0)
    off = run_closed_loop_ensemble(spec, config(), model, X0, 10.0, controlled=False)
    return X0, on, off


def test_controlled_beats_unforced(small_ensemble):
    _, on, off = small_ensemble
    assert all(r.converged for r in on)
    for a, b in zip(on, off):
        assert a.cumulative_cost < b.cumulative_cost


def test_heavier_input_weight_settles_later(model, small_ensemble):
    X0, on, _ = small_ensemble
    slow = run_closed_loop_ensemble(rigid_body(INERTIA), config(R=R_NOM * 1000), model, X0, 10.0)
    t_nom = np.nanmean([r.settling_time for r in on])
    t_slow = np.nanmean([r.settling_time for r in slow])
    assert t_slow > t_nom


def test_parallel_ensemble_matches_serial(model):
    spec = rigid_body(INERTIA)
    X0 = sample_momentum_sphere(0.5, 3, seed=2)
    a = run_closed_loop_ensemble(spec, config(), model, X0, 0.5, jobs=1)
    b = run_closed_loop_ensemble(spec, config(), model, X0, 0.5, jobs=2)
    for u, v in zip(a, b):
        assert np.array_equal(u.states, v.states)


def test_shooting_does_not_lose_to_frozen_gain(model):
    spec = rigid_body(INERTIA)
    x = np.array([0.6, 0.0, 0.8])
    C_ref = model.coordinates(PI_STAR)

    def true_cost(cfg, u):
        xx, J = x.copy(), 0.0
        for _ in range(cfg.horizon_steps):
            xx = _hold_step(spec, xx, u, cfg.plant_dt / cfg.substeps, cfg.substeps)
            e = model.coordinates(xx) - C_ref
            J += cfg.plant_dt * (e @ cfg.Q @ e + u @ cfg.R @ u)
        return J

    u_zoh = mpc_step(config(), model, x)
    u_sh = mpc_step(config(prediction="shooting"), model, x)
    assert true_cost(config(), u_sh) <= true_cost(config(), u_zoh) + 1e-12
    assert np.linalg.norm(u_sh - u_zoh) <= 0.2 * np.linalg.norm(u_zoh)
