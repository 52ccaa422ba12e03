"""Poisson brackets of dictionary-expanded functions.

Two structures are supported: the canonical bracket on (q1..qk, p1..pk) and
the so(3) Lie-Poisson bracket

    {F, G}(x) = -x . (grad F x grad G),

which generates the free rigid body as xdot_i = {x_i, H}. With this sign the
Euler equations come out right; writing the bracket as +x . (grad x_i x grad H)
flips every component.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .discovery import DEFAULT_RANK_TOLERANCE, null_space, sparsify
from .errors import InvalidArgumentError, UnsupportedError
from .features import CoefficientVector, eval_gradients, grad_theta_at


class BracketKind(Enum):
    CANONICAL = "canonical"
    LIE_POISSON_SO3 = "lie_poisson_so3"

    def check(self, n):
        if self is BracketKind.CANONICAL and n % 2:
            raise InvalidArgumentError("canonical bracket needs an even state dimension")
        if self is BracketKind.LIE_POISSON_SO3 and n != 3:
            raise InvalidArgumentError("so(3) Lie-Poisson bracket needs n = 3")


def _kind(kind):
    return kind if isinstance(kind, BracketKind) else BracketKind(kind)


def bracket_from_gradients(kind, gF, gG, X):
    """Bracket values from gradient rows; all arguments are (m, n)."""
    kind = _kind(kind)
    gF, gG, X = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (gF, gG, X))
    kind.check(X.shape[1])
    if kind is BracketKind.CANONICAL:
        k = X.shape[1] // 2
        return np.sum(gF[:, :k] * gG[:, k:] - gF[:, k:] * gG[:, :k], axis=1)
    return -np.einsum("ij,ij->i", X, np.cross(gF, gG))


def _coeffs(dictionary, xi):
    if isinstance(xi, CoefficientVector):
        if xi.dictionary != dictionary:
            raise InvalidArgumentError("coefficient vector belongs to a different dictionary")
        return xi.coefficients
    c = np.asarray(xi, dtype=float).reshape(-1)
    if c.shape[0] != len(dictionary):
        raise InvalidArgumentError("coefficient length does not match the dictionary")
    return c


def _gradient_rows(F, X):
    return np.einsum("ikj,k->ij", eval_gradients(F.dictionary, X), F.coefficients)


def bracket_series(kind, F, G, X):
    """{F, G} at every row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[1]
    if F.dictionary.n != n or G.dictionary.n != n:
        raise InvalidArgumentError("dictionary dimension does not match the state dimension")
    _kind(kind).check(n)
    return bracket_from_gradients(kind, _gradient_rows(F, X), _gradient_rows(G, X), X)


def bracket_eval(kind, F, G, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    return float(bracket_series(kind, F, G, x[None, :])[0])


def involution_check(kind, candidates, X):
    """Matrix of RMS bracket magnitudes between every pair of candidates."""
    candidates = list(candidates)
    if not candidates:
        raise InvalidArgumentError("need at least one candidate")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    grads = [_gradient_rows(c, X) for c in candidates]
    k = len(candidates)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            b = bracket_from_gradients(kind, grads[i], grads[j], X)
            out[i, j] = out[j, i] = np.sqrt(np.mean(b * b))
    return out


def basis_partial(dictionary, xi, i, x):
    """Partial derivative of Theta @ xi with respect to x_i at x.

    ``i`` counts from 1, matching the x1..xn naming used in dictionaries and CSVs.
    """
    if not 1 <= i <= dictionary.n:
        raise InvalidArgumentError(f"coordinate index {i} out of range 1..{dictionary.n}")
    return float(grad_theta_at(dictionary, x)[:, i - 1] @ _coeffs(dictionary, xi))


def build_D_matrix(theta, xi_H, upsilon, X):
    """Row i maps eta to {Upsilon(x_i) eta, H}(x_i) with H = Theta xi_H.

    Assembled from the partial-derivative rows of both dictionaries, so the
    two libraries may differ in size and terms.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if theta.n != 3 or upsilon.n != 3 or X.shape[1] != 3:
        raise UnsupportedError("the D-matrix construction is defined for three degrees of freedom")
    xi = _coeffs(theta, xi_H)
    dH = np.einsum("ikj,k->ij", eval_gradients(theta, X), xi)  # (m, 3)
    U = eval_gradients(upsilon, X)  # (m, r, 3)
    x1, x2, x3 = X[:, 0:1], X[:, 1:2], X[:, 2:3]
    H1, H2, H3 = dH[:, 0:1], dH[:, 1:2], dH[:, 2:3]
    U1, U2, U3 = U[:, :, 0], U[:, :, 1], U[:, :, 2]
    return x1 * (H2 * U3 - H3 * U2) + x2 * (H3 * U1 - H1 * U3) + x3 * (H1 * U2 - H2 * U1)


def discover_via_bracket(theta, xi_H, upsilon, X, rank_tolerance=DEFAULT_RANK_TOLERANCE,
                         sparsify_basis=True, l1_weight=0.1, max_iters=1000):
    """Constants of motion C = Upsilon eta in involution with a known Hamiltonian."""
    D = build_D_matrix(theta, xi_H, upsilon, X)
    sub = null_space(D, rank_tolerance, dictionary=upsilon, lam=0.0)
    if sparsify_basis and sub.kernel_dimension:
        sub.sparse = list(sparsify(sub, l1_weight=l1_weight, max_iters=max_iters))
    return sub


def recover_vector_field(theta, xi_H, x):
    """f_i(x) = {x_i, Theta xi_H} under the so(3) bracket; x is (3,) or (m, 3)."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    if theta.n != 3 or X.shape[1] != 3:
        raise UnsupportedError("vector-field recovery is defined for the so(3) bracket")
    xi = _coeffs(theta, xi_H)
    dH = np.einsum("ikj,k->ij", eval_gradients(theta, X), xi)
    eye = np.eye(3)
    F = np.column_stack([
        bracket_from_gradients(BracketKind.LIE_POISSON_SO3, np.broadcast_to(eye[i], X.shape), dH, X)
        for i in range(3)
    ])
    return F[0] if x.ndim == 1 else F
