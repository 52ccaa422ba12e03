"""Monomial dictionaries, their gradients, and the data matrices Theta and Gamma."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import InvalidArgumentError


def _exponents(n, p, include_constant):
    terms = []
    for deg in range(0 if include_constant else 1, p + 1):
        block = [a for a in itertools.product(range(deg + 1), repeat=n) if sum(a) == deg]
        # graded lex with x1 > x2 > ... > xn
        terms.extend(sorted(block, reverse=True))
    return tuple(terms)


@lru_cache(maxsize=None)
def _cached_exponents(n, p, include_constant):
    return _exponents(n, p, include_constant)


@dataclass(frozen=True)
class Dictionary:
    """Ordered monomials theta_alpha(x) = prod_i x_i ** alpha_i.

    Terms are sorted by total degree, then lexicographically with x1 leading.
    """

    n: int
    degree: int
    include_constant: bool = False

    def __post_init__(self):
        if self.n < 1 or self.degree < 1:
            raise InvalidArgumentError("dictionary needs n >= 1 and degree >= 1")

    @property
    def terms(self):
        return _cached_exponents(self.n, self.degree, self.include_constant)

    @property
    def exponents(self):
        e = np.array(self.terms, dtype=np.int64).reshape(-1, self.n)
        e.setflags(write=False)
        return e

    def __len__(self):
        return len(self.terms)

    def index(self, multi_index):
        return self.terms.index(tuple(int(a) for a in multi_index))

    def names(self):
        out = []
        for alpha in self.terms:
            parts = []
            for i, a in enumerate(alpha):
                if a == 1:
                    parts.append(f"x{i + 1}")
                elif a > 1:
                    parts.append(f"x{i + 1}^{a}")
            out.append(" ".join(parts) or "1")
        return out

    def to_json(self):
        return {"n": self.n, "degree": self.degree, "include_constant": self.include_constant}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["n"]), int(obj["degree"]), bool(obj.get("include_constant", False)))


def build_dictionary(n, p, include_constant=False):
    return Dictionary(int(n), int(p), bool(include_constant))


def _as_samples(dictionary, X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dictionary.n:
        raise InvalidArgumentError(f"{name} must have {dictionary.n} columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(X)


def eval_theta(dictionary, X):
    """Theta(X): entry (i, k) is theta_k(x_i)."""
    X = _as_samples(dictionary, X)
    return kernels.monomial_values(X, dictionary.exponents)


def eval_gamma(dictionary, X, Xdot):
    """Gamma(X, Xdot): entry (i, k) is grad theta_k(x_i) . xdot_i."""
    X = _as_samples(dictionary, X)
    Xdot = _as_samples(dictionary, Xdot, "Xdot")
    if Xdot.shape[0] != X.shape[0]:
        raise InvalidArgumentError("X and Xdot have different row counts")
    return kernels.monomial_directional(X, Xdot, dictionary.exponents)


def eval_gradients(dictionary, X):
    """(m, P, n) stack of dictionary gradients at each sample."""
    X = _as_samples(dictionary, X)
    return kernels.monomial_gradients(X, dictionary.exponents)


def grad_theta_at(dictionary, x):
    """P x n matrix whose row k is grad theta_k(x)."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return eval_gradients(dictionary, x)[0]


def differentiate_trajectory(times, X):
    """Second-order finite differences, one-sided at the ends so all rows survive.

    Handles non-uniform spacing.
    """
    t = np.asarray(times, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    if t.shape[0] < 3:
        raise InvalidArgumentError("need at least 3 samples to differentiate")
    if X.shape[0] != t.shape[0]:
        raise InvalidArgumentError("times and X have different row counts")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise InvalidArgumentError("times must be strictly increasing")
    h = (t[-1] - t[0]) / (t.shape[0] - 1)
    # a scalar spacing keeps constant signals exactly zero on uniform grids
    spacing = h if np.allclose(dt, h, rtol=1e-9, atol=0.0) else t
    D = np.gradient(X, spacing, axis=0, edge_order=2)
    return D[:, 0] if squeeze else D


class CoefficientVector:
    """A scalar function Theta(x) @ xi over a fixed dictionary."""

    __slots__ = ("dictionary", "coefficients")

    def __init__(self, dictionary, coefficients):
        c = np.array(coefficients, dtype=float).reshape(-1)
        if c.shape[0] != len(dictionary):
            raise InvalidArgumentError(
                f"{c.shape[0]} coefficients for a dictionary of {len(dictionary)} terms"
            )
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("coefficients contain non-finite entries")
        c.setflags(write=False)
        self.dictionary = dictionary
        self.coefficients = c

    @classmethod
    def from_terms(cls, dictionary, terms):
        """Build from a mapping {multi_index: coefficient}."""
        c = np.zeros(len(dictionary))
        for alpha, val in terms.items():
            c[dictionary.index(alpha)] += val
        return cls(dictionary, c)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        vals = eval_theta(self.dictionary, X) @ self.coefficients
        return vals[0] if X.ndim == 1 else vals

    def gradient(self, X):
        """Gradient at one point (n,) or at each row of X (m, n)."""
        X = np.asarray(X, dtype=float)
        G = np.einsum("ikj,k->ij", eval_gradients(self.dictionary, X), self.coefficients)
        return G[0] if X.ndim == 1 else G

    def __add__(self, other):
        self._check_same(other)
        return CoefficientVector(self.dictionary, self.coefficients + other.coefficients)

    def __sub__(self, other):
        self._check_same(other)
        return CoefficientVector(self.dictionary, self.coefficients - other.coefficients)

    def __mul__(self, scalar):
        return CoefficientVector(self.dictionary, float(scalar) * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def _check_same(self, other):
        if other.dictionary != self.dictionary:
            raise InvalidArgumentError("coefficient vectors use different dictionaries")

    def normalized(self):
        nrm = np.linalg.norm(self.coefficients)
        if nrm == 0:
            raise InvalidArgumentError("cannot normalize a zero coefficient vector")
        return CoefficientVector(self.dictionary, self.coefficients / nrm)

    def to_json(self):
        """List of {multi_index, coefficient} pairs, zeros omitted."""
        return [
            {"multi_index": list(alpha), "coefficient": float(c)}
            for alpha, c in zip(self.dictionary.terms, self.coefficients)
            if c != 0.0
        ]

    @classmethod
    def from_json(cls, dictionary, items):
        c = np.zeros(len(dictionary))
        for item in items:
            c[dictionary.index(item["multi_index"])] = float(item["coefficient"])
        return cls(dictionary, c)

    def __repr__(self):
        names = self.dictionary.names()
        body = " + ".join(f"{c:.4g}*{names[k]}" for k, c in enumerate(self.coefficients) if c != 0.0)
        return f"CoefficientVector({body or '0'})"
