"""Model predictive control in the intrinsic coordinates C(x) = Theta(x) Xi.

The predictive model is dC/dt = grad C(x) . B u. The gain map grad C(x) B is
frozen at the current measurement for the whole horizon (zero-order hold) and
one constant input is optimized per horizon, which makes each step a small
convex quadratic with a closed-form minimizer::

    J(u) = sum_{k=1..N} dt [ (e + G u k dt)^T Q (e + G u k dt) + u^T R u ],
    e = C(x) - C*,  G = grad C(x) B.

``prediction="shooting"`` instead propagates x with the known vector field
and minimizes the same cost by Gauss-Newton; it exists to validate the
frozen-gain model, not for production runs.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import DivergenceError, InvalidArgumentError, UncontrollableWarning
from .systems import DEFAULT_GUARD, ForcingSignal, _rk4_generic, euler_coefficients


def _coefficient_matrix(dictionary, subspace):
    if isinstance(subspace, np.ndarray):
        return subspace.reshape(len(dictionary), -1)
    if isinstance(subspace, (list, tuple)):
        return np.column_stack([getattr(c, "coefficients", c) for c in subspace])
    return subspace.basis


@dataclass
class MpcConfig:
    Q: np.ndarray
    R: np.ndarray
    reference_state: np.ndarray
    horizon_steps: int = 10
    plant_dt: float = 0.01
    substeps: int = 10
    input_bounds: Optional[np.ndarray] = None
    prediction: str = "zoh"

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        self.reference_state = np.asarray(self.reference_state, dtype=float).reshape(-1)
        for name, M, strict in (("Q", self.Q, True), ("R", self.R, False)):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
                raise InvalidArgumentError(f"{name} must be square and symmetric")
            ev = np.linalg.eigvalsh(M)
            if (strict and ev.min() <= 0) or (not strict and ev.min() < -1e-12 * max(1.0, ev.max())):
                raise InvalidArgumentError(f"{name} must be positive {'definite' if strict else 'semidefinite'}")
        if self.horizon_steps < 1 or self.substeps < 1:
            raise InvalidArgumentError("horizon_steps and substeps must be >= 1")
        if not self.plant_dt > 0:
            raise InvalidArgumentError("plant_dt must be positive")
        if self.input_bounds is not None:
            b = np.asarray(self.input_bounds, dtype=float).reshape(-1, 2)
            if np.any(b[:, 0] > b[:, 1]):
                raise InvalidArgumentError("input bounds need lower <= upper")
            self.input_bounds = b
        if self.prediction not in ("zoh", "shooting"):
            raise InvalidArgumentError("prediction must be 'zoh' or 'shooting'")


@dataclass
class ControlModel:
    """Identified conserved quantities and control matrix used for prediction.

    ``system`` is only consulted by the shooting predictor.
    """

    dictionary: object
    coefficients: np.ndarray
    B: np.ndarray
    system: object = None

    def __post_init__(self):
        self.coefficients = _coefficient_matrix(self.dictionary, self.coefficients)
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.B.shape[0] != self.dictionary.n:
            raise InvalidArgumentError("B must have one row per state")

    @property
    def d(self):
        return self.coefficients.shape[1]

    def coordinates(self, x):
        X = np.atleast_2d(np.asarray(x, dtype=float))
        C = kernels.monomial_values(X, self.dictionary.exponents) @ self.coefficients
        return C[0] if np.ndim(x) == 1 else C

    def gain(self, x):
        X = np.atleast_2d(np.asarray(x, dtype=float))
        grads = kernels.monomial_gradients(X, self.dictionary.exponents)[0]  # (P, n)
        return self.coefficients.T @ grads @ self.B


def conserved_coordinates(dictionary, subspace, x):
    """C_c(x) = Theta(x) xi_c for every column of the subspace."""
    Xi = _coefficient_matrix(dictionary, subspace)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    C = kernels.monomial_values(X, dictionary.exponents) @ Xi
    return C[0] if np.ndim(x) == 1 else C


def control_gain_map(dictionary, subspace, B, x):
    """d x q matrix whose row c is grad C_c(x)^T B."""
    Xi = _coefficient_matrix(dictionary, subspace)
    grads = kernels.monomial_gradients(np.atleast_2d(np.asarray(x, dtype=float)), dictionary.exponents)[0]
    return Xi.T @ grads @ np.atleast_2d(np.asarray(B, dtype=float))


def horizon_sums(N, dt):
    """(sum_k k dt, sum_k (k dt)^2) for k = 1..N, each times dt."""
    s1 = dt * dt * N * (N + 1) / 2.0
    s2 = dt * dt * dt * N * (N + 1) * (2 * N + 1) / 6.0
    return s1, s2


def zoh_input(e, G, Q, R, N, dt):
    """Minimizer of the frozen-gain horizon cost for a single constant input."""
    s1, s2 = horizon_sums(N, dt)
    M = s2 * (G.T @ Q @ G) + N * dt * R
    rhs = -s1 * (G.T @ (Q @ e))
    return np.linalg.lstsq(M, rhs, rcond=None)[0]


def horizon_cost(e, G, u, Q, R, N, dt):
    """The frozen-gain horizon cost J(u); used as an oracle in tests."""
    J = 0.0
    for k in range(1, N + 1):
        c = e + G @ u * (k * dt)
        J += dt * (c @ Q @ c + u @ R @ u)
    return J


def _clip(u, bounds):
    if bounds is None:
        return u
    return np.clip(u, bounds[:, 0], bounds[:, 1])


def _hold_step(spec, x, u, h, nsub, guard=DEFAULT_GUARD):
    if spec.kind == "rigid_body" and spec.drift is None:
        bu = (spec.control_matrix @ u)[None, :]
        X, fail = kernels.rk4_rigid_body(x, euler_coefficients(spec.inertia), bu, h, nsub, guard)
    else:
        forcing = None
        if spec.input_dim:
            forcing = ForcingSignal(lambda t: np.tile(u, (len(t), 1)), spec.input_dim, "hold")
        X, fail = _rk4_generic(spec, x, forcing, h, nsub, guard)
    if fail >= 0:
        raise DivergenceError(fail * h, np.linalg.norm(X[fail]))
    return X[-1]


def _shooting_input(config, model, x_now, C_ref, u0, iters=8):
    if model.system is None:
        raise InvalidArgumentError("shooting prediction needs model.system")
    spec = model.system.with_control_matrix(model.B)
    N, dt, nsub = config.horizon_steps, config.plant_dt, config.substeps
    wq = np.linalg.cholesky(config.Q).T
    ev, V = np.linalg.eigh(config.R)
    wr = (V * np.sqrt(np.clip(ev, 0, None))) @ V.T

    def residual(u):
        x = x_now.copy()
        out = []
        for _ in range(N):
            x = _hold_step(spec, x, u, dt / nsub, nsub)
            out.append(np.sqrt(dt) * (wq @ (model.coordinates(x) - C_ref)))
            out.append(np.sqrt(dt) * (wr @ u))
        return np.concatenate(out)

    u = u0.copy()
    for _ in range(iters):
        r = residual(u)
        J = np.empty((r.size, u.size))
        for j in range(u.size):
            step = 1e-7 * max(1.0, abs(u[j]))
            du = np.zeros_like(u)
            du[j] = step
            J[:, j] = (residual(u + du) - r) / step
        delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        u = u + delta
        if np.linalg.norm(delta) <= 1e-12 * max(1.0, np.linalg.norm(u)):
            break
    return u


def mpc_step(config, model, x_now, C_ref=None):
    """Control input to hold over the next macro step."""
    x_now = np.asarray(x_now, dtype=float)
    if C_ref is None:
        C_ref = model.coordinates(config.reference_state)
    e = model.coordinates(x_now) - C_ref
    G = model.gain(x_now)
    q = G.shape[1]
    if not np.any(G) and np.any(e):
        warnings.warn("control gain map vanishes; returning zero input", UncontrollableWarning, stacklevel=2)
        return np.zeros(q)
    u = zoh_input(e, G, config.Q, config.R, config.horizon_steps, config.plant_dt)
    if config.prediction == "shooting":
        u = _shooting_input(config, model, x_now, C_ref, u)
    return _clip(u, config.input_bounds)


@dataclass
class ClosedLoopResult:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    coordinates: np.ndarray
    cost: np.ndarray
    reference: np.ndarray
    converged: bool
    final_distance: float
    settling_time: float = float("nan")
    tolerance: float = 1e-2
    meta: dict = field(default_factory=dict)

    @property
    def final_error(self):
        return np.abs(self.coordinates[-1] - self.reference)

    @property
    def cumulative_cost(self):
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 0.0
        return float(np.sum(self.cost[:-1]) * dt)


def _settling_time(times, err, tol):
    bad = np.flatnonzero(np.any(err > tol, axis=1))
    if bad.size == 0:
        return float(times[0])
    if bad[-1] == times.size - 1:
        return float("nan")
    return float(times[bad[-1] + 1])


def run_closed_loop(spec, config, model, x0, t_end, tolerance=1e-2, controlled=True):
    """Receding-horizon loop: solve, hold for ``substeps`` RK4 steps, repeat.

    With ``controlled=False`` the same bookkeeping runs with u = 0, giving the
    unforced baseline.
    """
    K = int(round(t_end / config.plant_dt))
    if K < 1:
        raise InvalidArgumentError("t_end must cover at least one macro step")
    n, q = spec.state_dim, spec.input_dim
    h = config.plant_dt / config.substeps
    C_ref = model.coordinates(config.reference_state)
    times = np.arange(K + 1) * config.plant_dt
    X = np.empty((K + 1, n))
    U = np.zeros((K + 1, q))
    C = np.empty((K + 1, model.d))
    cost = np.empty(K + 1)
    x = np.asarray(x0, dtype=float).copy()
    zero = np.zeros(q)
    for k in range(K + 1):
        X[k] = x
        C[k] = model.coordinates(x)
        u = mpc_step(config, model, x, C_ref) if controlled else zero
        U[k] = u
        e = C[k] - C_ref
        cost[k] = e @ config.Q @ e + u @ config.R @ u
        if k < K:
            x = _hold_step(spec, x, u, h, config.substeps)
    err = np.abs(C - C_ref)
    ref = config.reference_state
    dist = min(np.linalg.norm(X[-1] - ref), np.linalg.norm(X[-1] + ref))
    return ClosedLoopResult(
        times, X, U, C, cost, C_ref,
        converged=bool(np.all(err[-1] <= tolerance)),
        final_distance=float(dist),
        settling_time=_settling_time(times, err, tolerance),
        tolerance=tolerance,
    )


def _run_star(args):
    return run_closed_loop(*args)


def run_closed_loop_ensemble(spec, config, model, initial_states, t_end, tolerance=1e-2,
                             controlled=True, jobs=1):
    tasks = [(spec, config, model, x0, t_end, tolerance, controlled) for x0 in initial_states]
    if jobs is None or jobs <= 1 or len(tasks) < 2:
        return [_run_star(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_star, tasks))
