"""Controllable dynamical systems, fixed-step integration and ensemble sampling.

Systems are control-affine, ``xdot = f(x) + B u``. The rigid body in body-frame
angular momentum coordinates has a compiled RK4 path; other systems go through
a generic NumPy stepper.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DivergenceError, InvalidArgumentError

DEFAULT_GUARD = 1e9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")


def euler_coefficients(inertia):
    """Coefficients of the quadratic terms of the free Euler equations."""
    i1, i2, i3 = (float(v) for v in inertia)
    return np.array([
        (i2 - i3) / (i3 * i2),
        (i3 - i1) / (i1 * i3),
        (i1 - i2) / (i2 * i1),
    ])


def _rigid_body_drift(x, params):
    c = euler_coefficients((params["I1"], params["I2"], params["I3"]))
    x = np.asarray(x, dtype=float)
    return c * np.stack([x[..., 1] * x[..., 2], x[..., 2] * x[..., 0], x[..., 0] * x[..., 1]], axis=-1)


def _linear_decay_drift(x, params):
    return -params["rate"] * np.asarray(x, dtype=float)


_DRIFTS = {
    "rigid_body": _rigid_body_drift,
    "linear_decay": _linear_decay_drift,
}


@dataclass(frozen=True)
class SystemSpec:
    """A control-affine vector field with a constant control matrix.

    ``kind`` names a built-in drift (``"rigid_body"``, ``"linear_decay"``);
    pass ``drift`` instead for a custom vectorized callable ``f(x, params)``.
    Built-in kinds pickle cleanly and can be integrated in worker processes.
    """

    kind: str
    state_dim: int
    input_dim: int
    control_matrix: np.ndarray
    parameters: dict = field(default_factory=dict)
    drift: Optional[Callable] = None

    def __post_init__(self):
        if self.state_dim < 1:
            raise InvalidArgumentError("state_dim must be >= 1")
        if self.input_dim < 0:
            raise InvalidArgumentError("input_dim must be >= 0")
        if np.size(self.control_matrix) != self.state_dim * self.input_dim:
            raise InvalidArgumentError(
                f"control matrix needs {self.state_dim * self.input_dim} entries, "
                f"got {np.size(self.control_matrix)}"
            )
        B = np.asarray(self.control_matrix, dtype=float).reshape(self.state_dim, self.input_dim)
        _check_finite("control_matrix", B)
        object.__setattr__(self, "control_matrix", _frozen(B))
        if self.drift is None and self.kind not in _DRIFTS:
            raise InvalidArgumentError(f"unknown system kind {self.kind!r}")
        if self.kind == "rigid_body":
            if self.state_dim != 3:
                raise InvalidArgumentError("rigid body has state_dim 3")
            if not all(self.parameters[k] > 0 for k in ("I1", "I2", "I3")):
                raise InvalidArgumentError("principal moments of inertia must be positive")

    @property
    def inertia(self):
        return np.array([self.parameters["I1"], self.parameters["I2"], self.parameters["I3"]])

    def f(self, x):
        """Unforced vector field, vectorized over leading axes."""
        fn = self.drift if self.drift is not None else _DRIFTS[self.kind]
        return fn(x, self.parameters)

    def rhs(self, x, u=None):
        out = self.f(x)
        if u is not None and self.input_dim:
            out = out + np.asarray(u, dtype=float) @ self.control_matrix.T
        return out

    def with_control_matrix(self, B):
        return SystemSpec(self.kind, self.state_dim, self.input_dim, B, dict(self.parameters), self.drift)


def rigid_body(inertia=(1.0, 0.5, 1.0 / 3.0), control_matrix=None):
    """Forced Euler equations in body angular momentum, B defaulting to identity."""
    B = np.eye(3) if control_matrix is None else control_matrix
    B = np.asarray(B, dtype=float)
    q = B.shape[1] if B.ndim == 2 else 3
    I1, I2, I3 = (float(v) for v in inertia)
    return SystemSpec("rigid_body", 3, q, B, {"I1": I1, "I2": I2, "I3": I3})


def linear_decay(n=1, rate=1.0):
    """xdot = -rate * x, unactuated."""
    return SystemSpec("linear_decay", n, 0, np.zeros((n, 0)), {"rate": float(rate)})


def rigid_body_rhs(Pi, tau, I):
    """Forced Euler equations with B = identity."""
    Pi = np.asarray(Pi, dtype=float)
    tau = np.asarray(tau, dtype=float)
    I = np.asarray(I, dtype=float)
    for name, a in (("Pi", Pi), ("tau", tau), ("I", I)):
        _check_finite(name, a)
    if np.any(I <= 0):
        raise InvalidArgumentError("principal moments of inertia must be positive")
    c = euler_coefficients(I)
    return c * np.array([Pi[1] * Pi[2], Pi[2] * Pi[0], Pi[0] * Pi[1]]) + tau


class ForcingSignal:
    """A closed-form input u(t); evaluates on scalars or arrays of times."""

    def __init__(self, func, dim, name="custom"):
        self._func = func
        self.dim = int(dim)
        self.name = name

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        out = np.asarray(self._func(np.atleast_1d(t_arr)), dtype=float)
        out = out.reshape(np.atleast_1d(t_arr).shape[0], self.dim)
        return out[0] if t_arr.ndim == 0 else out

    def __repr__(self):
        return f"ForcingSignal({self.name!r}, dim={self.dim})"


def _cubed_multisine(t):
    return np.stack([(0.5 + np.sin(40.0 * t)) ** 3, 0.5 + np.sin(10.0 * t), np.sin(20.0 * t)], axis=-1)


def paper_forcing():
    """Simultaneous three-channel excitation used to identify B."""
    return ForcingSignal(_cubed_multisine, 3, name="multisine")


def zero_forcing(q):
    return ForcingSignal(lambda t: np.zeros((len(t), q)), q, name="zero")


@dataclass(frozen=True)
class TrajectoryDataset:
    """Uniformly indexed samples of one trajectory.

    ``derivative_scheme`` records where ``derivatives`` came from: ``"analytic"``
    (right-hand side evaluated at the samples), ``"central2"`` (numerical), or
    ``None`` when absent.
    """

    times: np.ndarray
    states: np.ndarray
    derivatives: Optional[np.ndarray] = None
    inputs: Optional[np.ndarray] = None
    derivative_scheme: Optional[str] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        X = np.asarray(self.states, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        m = t.shape[0]
        if X.shape[0] != m:
            raise InvalidArgumentError("states and times have different row counts")
        if m > 1 and np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("times must be strictly increasing")
        _check_finite("times", t)
        _check_finite("states", X)
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "states", _frozen(X))
        for name in ("derivatives", "inputs"):
            a = getattr(self, name)
            if a is None:
                continue
            a = np.asarray(a, dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            if a.shape[0] != m:
                raise InvalidArgumentError(f"{name} has {a.shape[0]} rows, expected {m}")
            _check_finite(name, a)
            object.__setattr__(self, name, _frozen(a))
        if self.derivatives is not None and self.derivatives.shape[1] != X.shape[1]:
            raise InvalidArgumentError("derivatives must have the same width as states")
        if self.derivatives is not None and self.derivative_scheme is None:
            object.__setattr__(self, "derivative_scheme", "given")

    @property
    def m(self):
        return self.states.shape[0]

    @property
    def n(self):
        return self.states.shape[1]

    @property
    def q(self):
        return 0 if self.inputs is None else self.inputs.shape[1]


def stack_datasets(datasets):
    """Concatenate samples of one or more datasets into (X, Xdot, U).

    Xdot and U are ``None`` unless every dataset carries them.
    """
    if isinstance(datasets, TrajectoryDataset):
        datasets = [datasets]
    datasets = list(datasets)
    if not datasets:
        raise InvalidArgumentError("no datasets given")
    X = np.vstack([d.states for d in datasets])
    Xd = None
    if all(d.derivatives is not None for d in datasets):
        Xd = np.vstack([d.derivatives for d in datasets])
    U = None
    if all(d.inputs is not None for d in datasets):
        U = np.vstack([d.inputs for d in datasets])
    return X, Xd, U


def _rk4_generic(spec, x0, forcing, h, nsteps, guard):
    X = np.empty((nsteps + 1, spec.state_dim))
    X[0] = x0
    x = np.array(x0, dtype=float)
    for s in range(nsteps):
        t = s * h
        if forcing is None:
            ua = um = ub = None
        else:
            ua, um, ub = forcing(t), forcing(t + 0.5 * h), forcing(t + h)
        k1 = spec.rhs(x, ua)
        k2 = spec.rhs(x + 0.5 * h * k1, um)
        k3 = spec.rhs(x + 0.5 * h * k2, um)
        k4 = spec.rhs(x + h * k3, ub)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X[s + 1] = x
        nrm = np.linalg.norm(x)
        if not np.isfinite(nrm) or nrm > guard:
            return X, s + 1
    return X, -1


def _num_steps(t_end, dt):
    if not (dt > 0 and t_end > 0):
        raise InvalidArgumentError("dt and t_end must be positive")
    n = int(round(t_end / dt))
    if n < 1:
        raise InvalidArgumentError("t_end must be at least one step dt")
    if abs(n * dt - t_end) > 1e-9 * max(t_end, 1.0):
        raise InvalidArgumentError("t_end must be an integer multiple of dt")
    return n


def integrate(spec, x0, forcing=None, t_end=10.0, dt=0.01, guard=DEFAULT_GUARD):
    """Fixed-step RK4 trajectory sampled at multiples of ``dt``.

    Derivatives are the analytic right-hand side at each sample. Raises
    :class:`DivergenceError` if the state norm exceeds ``guard``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != spec.state_dim:
        raise InvalidArgumentError(f"x0 has length {x0.shape[0]}, expected {spec.state_dim}")
    _check_finite("x0", x0)
    if forcing is not None and forcing.dim != spec.input_dim:
        raise InvalidArgumentError("forcing dimension does not match the system input dimension")
    nsteps = _num_steps(t_end, dt)
    times = np.arange(nsteps + 1) * dt

    if spec.kind == "rigid_body" and spec.drift is None:
        if forcing is None:
            bu = np.zeros((1, 3))
        else:
            half = np.arange(2 * nsteps + 1) * (0.5 * dt)
            bu = forcing(half) @ spec.control_matrix.T
        X, fail = kernels.rk4_rigid_body(
            x0, euler_coefficients(spec.inertia), np.ascontiguousarray(bu), dt, nsteps, guard
        )
    else:
        X, fail = _rk4_generic(spec, x0, forcing, dt, nsteps, guard)
    if fail >= 0:
        raise DivergenceError(times[fail], np.linalg.norm(X[fail]))

    U = None if forcing is None else forcing(times)
    Xdot = spec.rhs(X, U)
    return TrajectoryDataset(times, X, Xdot, U, derivative_scheme="analytic")


def _integrate_star(args):
    return integrate(*args)


def integrate_ensemble(spec, initial_states, forcing=None, t_end=10.0, dt=0.01,
                       guard=DEFAULT_GUARD, jobs=1):
    """Integrate each initial state independently; order is preserved."""
    tasks = [(spec, x0, forcing, t_end, dt, guard) for x0 in initial_states]
    if jobs is None or jobs <= 1 or len(tasks) < 2:
        return [_integrate_star(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_integrate_star, tasks))


def _fibonacci_sphere(count):
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _fibonacci_directions(count, seed):
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    rng = np.random.default_rng(seed)
    pts = _fibonacci_sphere(count) @ _random_rotation(rng).T
    return pts / np.linalg.norm(pts, axis=1, keepdims=True), rng


def sample_momentum_sphere(L_value, count, seed=0):
    """Seeded near-uniform points with 0.5 * |Pi|^2 == L_value.

    A Fibonacci lattice rotated by a seed-determined rotation.
    """
    if not L_value > 0:
        raise InvalidArgumentError("L_value must be positive")
    dirs, _ = _fibonacci_directions(count, seed)
    return dirs * math.sqrt(2.0 * L_value)


def sample_momentum_shell(count, seed=0, radii=(0.5, 1.5)):
    """Fibonacci directions with seeded radii uniform in ``radii``.

    Spreading the ensemble over many momentum spheres keeps polynomials that
    vanish on a single sphere out of the discovered kernel.
    """
    lo, hi = (float(r) for r in radii)
    if not 0 < lo <= hi:
        raise InvalidArgumentError("radii must satisfy 0 < lo <= hi")
    dirs, rng = _fibonacci_directions(count, seed)
    return dirs * rng.uniform(lo, hi, size=(count, 1))


def angular_momentum(X):
    X = np.asarray(X, dtype=float)
    return 0.5 * np.sum(X * X, axis=-1)


def kinetic_energy(X, inertia):
    X = np.asarray(X, dtype=float)
    return 0.5 * np.sum(X * X / np.asarray(inertia, dtype=float), axis=-1)
