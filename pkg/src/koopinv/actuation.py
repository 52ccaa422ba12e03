"""Control-matrix identification from forced data and known eigenfunctions.

For each eigenfunction phi = Theta xi and sample (x, xdot, u)::

    [Gamma(x, xdot) - lam Theta(x)] xi = kron(grad phi(x), u) . vec(B)

with vec(B) the rows of B stacked (b_1, ..., b_n). All eigenfunctions and
samples go into one least-squares problem solved with the pseudoinverse.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningWarning, InvalidArgumentError, UnidentifiableError
from .features import CoefficientVector, eval_gamma, eval_gradients, eval_theta
from .systems import stack_datasets

CONDITION_WARN = 1e10


@dataclass
class ControlMatrixEstimate:
    B_hat: np.ndarray
    residual_rms: float
    regressor_condition: float
    lam: float = 0.0
    rank: int = 0

    def to_json(self):
        return {
            "B_hat": self.B_hat.tolist(),
            "shape": list(self.B_hat.shape),
            "residual_rms": float(self.residual_rms),
            "regressor_condition": float(self.regressor_condition),
            "lambda": float(self.lam),
        }

    @classmethod
    def from_json(cls, obj):
        B = np.asarray(obj["B_hat"], dtype=float).reshape(obj["shape"])
        return cls(B, float(obj["residual_rms"]), float(obj["regressor_condition"]),
                   float(obj.get("lambda", 0.0)), int(np.prod(B.shape)))


def kron_row(g, u):
    """[g1*u1, ..., g1*uq, g2*u1, ..., gn*uq], pairing with row-major vec(B)."""
    return np.outer(np.asarray(g, dtype=float), np.asarray(u, dtype=float)).reshape(-1)


def _eigen_coefficients(dictionary, subspace):
    if isinstance(subspace, np.ndarray):
        cols = subspace.reshape(len(dictionary), -1)
    elif isinstance(subspace, (list, tuple)):
        cols = np.column_stack([c.coefficients if isinstance(c, CoefficientVector) else c for c in subspace])
    else:
        cols = subspace.basis
    if cols.shape[1] == 0:
        raise InvalidArgumentError("no eigenfunctions to regress on")
    return cols


def estimate_B(dictionary, subspace, forced, lam=0.0):
    """Least-squares B_hat from forced trajectories and identified eigenfunctions.

    ``subspace`` may be an InvariantSubspace, a (P, d) coefficient matrix, or a
    list of CoefficientVectors.
    """
    X, Xdot, U = stack_datasets(forced)
    if U is None:
        raise InvalidArgumentError("forced data has no input columns")
    if Xdot is None:
        raise InvalidArgumentError("forced data has no derivatives")
    Xi = _eigen_coefficients(dictionary, subspace)
    n, q = X.shape[1], U.shape[1]

    target = eval_gamma(dictionary, X, Xdot) @ Xi  # (m, d)
    if lam != 0.0:
        target -= lam * (eval_theta(dictionary, X) @ Xi)
    grads = np.einsum("ikj,kc->icj", eval_gradients(dictionary, X), Xi)  # (m, d, n)
    # rows ordered eigenfunction-major
    reg = np.einsum("icj,il->cijl", grads, U).reshape(-1, n * q)
    y = target.T.reshape(-1)

    s = np.linalg.svd(reg, compute_uv=False)
    tol = s[0] * max(reg.shape) * np.finfo(float).eps if s.size and s[0] > 0 else 0.0
    rank = int(np.sum(s > tol)) if s.size and s[0] > 0 else 0
    if rank < n * q:
        raise UnidentifiableError(rank, n * q)
    cond = float(s[0] / s[-1])
    if cond > CONDITION_WARN:
        warnings.warn(f"actuation regressor condition number {cond:.3g}", ConditioningWarning, stacklevel=2)

    vecB = np.linalg.pinv(reg) @ y
    resid = reg @ vecB - y
    return ControlMatrixEstimate(
        vecB.reshape(n, q), float(np.sqrt(np.mean(resid * resid))), cond, float(lam), rank
    )
