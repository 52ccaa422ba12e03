"""Koopman eigenfunction identification from the null space of lambda*Theta - Gamma.

For ``lam = 0`` the null space collects the conserved quantities representable
in the dictionary. The pipeline is::

    A = build_generator_matrix(dictionary, data, lam)
    subspace = null_space(A, rank_tolerance, dictionary=dictionary, lam=lam)
    sparse = sparsify(subspace)
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceWarning, DegenerateDataError, InvalidArgumentError
from .features import CoefficientVector, Dictionary, eval_gamma, eval_theta
from .systems import TrajectoryDataset, stack_datasets

DEFAULT_RANK_TOLERANCE = 1e-6
CLEAN_RELATIVE = 1e-6


@dataclass
class InvariantSubspace:
    """Orthonormal null-space basis with the full singular spectrum it came from."""

    basis: np.ndarray
    singular_values: np.ndarray
    rank_tolerance: float
    lam: float = 0.0
    dictionary: Optional[Dictionary] = None
    sparse: Optional[list] = None

    @property
    def kernel_dimension(self):
        return self.basis.shape[1]

    def columns(self):
        if self.dictionary is None:
            raise InvalidArgumentError("subspace has no dictionary attached")
        return [CoefficientVector(self.dictionary, self.basis[:, c]) for c in range(self.kernel_dimension)]

    def to_json(self):
        out = {
            "lambda": float(self.lam),
            "rank_tolerance": float(self.rank_tolerance),
            "singular_values": [float(s) for s in self.singular_values],
            "kernel_dimension": int(self.kernel_dimension),
            "basis": [c.to_json() for c in self.columns()],
        }
        if self.dictionary is not None:
            out["dictionary"] = self.dictionary.to_json()
        if self.sparse is not None:
            out["sparse"] = [c.to_json() for c in self.sparse]
        return out

    @classmethod
    def from_json(cls, obj, dictionary=None):
        if dictionary is None:
            dictionary = Dictionary.from_json(obj["dictionary"])
        cols = [CoefficientVector.from_json(dictionary, c).coefficients for c in obj["basis"]]
        basis = np.column_stack(cols) if cols else np.zeros((len(dictionary), 0))
        sparse = None
        if "sparse" in obj:
            sparse = [CoefficientVector.from_json(dictionary, c) for c in obj["sparse"]]
        return cls(
            basis,
            np.asarray(obj["singular_values"], dtype=float),
            float(obj["rank_tolerance"]),
            float(obj["lambda"]),
            dictionary,
            sparse,
        )


def build_generator_matrix(dictionary, data, lam=0.0):
    """lam * Theta(X) - Gamma(X, Xdot) stacked over all samples."""
    X, Xdot, _ = stack_datasets(data)
    if Xdot is None:
        raise InvalidArgumentError("data has no derivatives; differentiate the trajectories first")
    A = -eval_gamma(dictionary, X, Xdot)
    if lam != 0.0:
        A += lam * eval_theta(dictionary, X)
    return A


def null_space(A, rank_tolerance=DEFAULT_RANK_TOLERANCE, dictionary=None, lam=0.0):
    """Right singular vectors of A whose singular value is <= rank_tolerance * sigma_1.

    The returned spectrum has one entry per column of A; when A has fewer
    rows than columns the missing singular values are reported as zero.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1:
        raise InvalidArgumentError("A must be a non-empty 2-D array")
    if not 0.0 < rank_tolerance < 1.0:
        raise InvalidArgumentError("rank_tolerance must lie in (0, 1)")
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError("A contains non-finite entries")
    m, P = A.shape
    _, s, Vt = np.linalg.svd(A, full_matrices=m < P)
    spectrum = np.zeros(P)
    spectrum[: s.shape[0]] = s
    if spectrum[0] == 0.0:
        raise DegenerateDataError("data matrix is identically zero; the dictionary is unconstrained")
    keep = spectrum <= rank_tolerance * spectrum[0]
    basis = Vt[keep].T.copy()
    return InvariantSubspace(basis, spectrum, float(rank_tolerance), float(lam), dictionary)


def eigenfunction_residual(dictionary, xi, data, lam=0.0):
    """RMS over samples of |grad phi(x) . xdot - lam * phi(x)| for phi = Theta @ xi."""
    coeffs = xi.coefficients if isinstance(xi, CoefficientVector) else np.asarray(xi, dtype=float)
    A = build_generator_matrix(dictionary, data, lam)
    r = A @ coeffs
    return float(np.sqrt(np.mean(r * r)))


def largest_principal_angle(reference, other):
    """Largest principal angle (radians) of span(other) relative to span(reference).

    Uses the sine formulation, which stays accurate for tiny angles. When
    span(other) has lower dimension this measures how far it is from lying
    inside span(reference).
    """
    Qa, _ = np.linalg.qr(np.asarray(reference, dtype=float).reshape(len(reference), -1))
    Qb, _ = np.linalg.qr(np.asarray(other, dtype=float).reshape(len(other), -1))
    if Qb.shape[1] > Qa.shape[1]:
        Qa, Qb = Qb, Qa
    resid = Qb - Qa @ (Qa.T @ Qb)
    s = np.linalg.norm(resid, 2) if resid.size else 0.0
    return float(math.asin(min(1.0, s)))


# -- sparsification ---------------------------------------------------------

class SparseSet(list):
    """List of sparse CoefficientVectors plus convergence diagnostics."""

    def __init__(self, items=(), converged=True, messages=()):
        super().__init__(items)
        self.converged = converged
        self.messages = list(messages)


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _adm(B, q, lam, max_iters, tol):
    """Alternate x = soft(Bq, lam) and q = B^T x / |B^T x|; returns (v, converged)."""
    q = q / np.linalg.norm(q)
    for _ in range(max_iters):
        g = B.T @ _soft(B @ q, lam)
        ng = np.linalg.norm(g)
        if ng == 0.0:
            return None, True
        q_new = g / ng
        if np.linalg.norm(q_new - q) <= tol:
            return B @ q_new, True
        q = q_new
    return B @ q, False


def _clean(v):
    v = np.where(np.abs(v) < CLEAN_RELATIVE * np.max(np.abs(v)), 0.0, v)
    v = v / np.linalg.norm(v)
    return -v if v[np.flatnonzero(v)[0]] < 0 else v


def _score(v):
    nz = np.abs(v[v != 0.0])
    # fewest terms, then the best-separated support, then smallest l1
    return (int(nz.size), -round(float(nz.min()), 9), round(float(nz.sum()), 9))


def _vertex_candidates(B, limit):
    P, k = B.shape
    if k == 1:
        return [B[:, 0]]
    norms = np.linalg.norm(B, axis=1)
    rows = np.flatnonzero(norms > 1e-12 * norms.max())
    if math.comb(rows.size, k - 1) > limit:
        return []
    out = []
    for S in itertools.combinations(rows, k - 1):
        sub = B[list(S)]
        _, s, Vt = np.linalg.svd(sub)
        if s[-1] <= 1e-9 * s[0]:
            continue
        out.append(B @ Vt[-1])
    return out


def sparsify(subspace, l1_weight=0.1, max_iters=1000, tol=1e-10, enumeration_limit=20000):
    """Sparse basis of the invariant subspace, one direction per round.

    Each round gathers candidate unit vectors in the current subspace: ADM
    fixed points of soft-thresholding and renormalization started from every
    dictionary row, plus (when cheap) every vertex, i.e. every vector with
    d - 1 forced zero coordinates. The winner has the fewest non-zeros; ties
    go to the largest smallest non-zero magnitude, then the smallest l1 norm.
    Entries below 1e-6 of the largest are zeroed, the vector is renormalized,
    and its direction is deflated before the next round.
    """
    basis = subspace.basis if isinstance(subspace, InvariantSubspace) else np.asarray(subspace, float)
    dictionary = subspace.dictionary if isinstance(subspace, InvariantSubspace) else None
    P, d = basis.shape
    if d < 1:
        raise InvalidArgumentError("sparsify needs a non-empty subspace")
    B = np.linalg.qr(basis)[0]
    found, messages, converged = [], [], True
    for rnd in range(d):
        k = B.shape[1]
        cands = []
        for r in range(P):
            if np.linalg.norm(B[r]) <= 1e-12:
                continue
            v, ok = _adm(B, B[r].copy(), l1_weight, max_iters, tol)
            if not ok:
                converged = False
                messages.append(f"round {rnd}: ADM from row {r} did not stabilize in {max_iters} iterations")
            if v is not None:
                cands.append(v)
        cands.extend(_vertex_candidates(B, enumeration_limit))
        if not cands:
            cands = [B[:, 0]]
        cleaned = [_clean(v) for v in cands]
        best = min(range(len(cleaned)), key=lambda i: _score(cleaned[i]))
        v = cleaned[best]
        found.append(v)
        if k > 1:
            proj = B @ (B.T @ v)
            proj /= np.linalg.norm(proj)
            U, _, _ = np.linalg.svd(B - np.outer(proj, proj @ B), full_matrices=False)
            B = U[:, : k - 1]
    if not converged:
        warnings.warn("; ".join(messages[:3]), ConvergenceWarning, stacklevel=2)
    if dictionary is None:
        return SparseSet(found, converged, messages)
    return SparseSet([CoefficientVector(dictionary, v) for v in found], converged, messages)


# -- end-to-end discovery with held-out validation -------------------------

@dataclass
class DiscoveryResult:
    subspace: InvariantSubspace
    sparse: list
    residuals: dict = field(default_factory=dict)
    train_index: list = field(default_factory=list)
    holdout_index: list = field(default_factory=list)

    def to_json(self):
        out = self.subspace.to_json()
        out["residuals"] = self.residuals
        out["train_trajectories"] = list(self.train_index)
        out["holdout_trajectories"] = list(self.holdout_index)
        return out


def split_holdout(count, holdout_fraction, seed=0):
    """Seeded trajectory-level split; returns (train, holdout) index lists."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise InvalidArgumentError("holdout_fraction must lie in [0, 1)")
    n_hold = int(round(holdout_fraction * count))
    if count - n_hold < 1:
        n_hold = count - 1
    perm = np.random.default_rng(seed).permutation(count)
    return sorted(int(i) for i in perm[n_hold:]), sorted(int(i) for i in perm[:n_hold])


def discover_invariants(dictionary, datasets, lam=0.0, rank_tolerance=DEFAULT_RANK_TOLERANCE,
                        holdout_fraction=0.2, seed=0, l1_weight=0.1, max_iters=1000):
    """Null space on training trajectories, sparsified, with residuals on both splits."""
    if isinstance(datasets, TrajectoryDataset):
        datasets = [datasets]
    datasets = list(datasets)
    train, hold = split_holdout(len(datasets), holdout_fraction, seed)
    train_data = [datasets[i] for i in train]
    hold_data = [datasets[i] for i in hold]
    A = build_generator_matrix(dictionary, train_data, lam)
    subspace = null_space(A, rank_tolerance, dictionary=dictionary, lam=lam)
    sparse = []
    if subspace.kernel_dimension:
        sparse = list(sparsify(subspace, l1_weight=l1_weight, max_iters=max_iters))
        subspace.sparse = sparse

    def res(vectors, data):
        if not data:
            return []
        A_eval = build_generator_matrix(dictionary, data, lam)
        return [float(np.sqrt(np.mean((A_eval @ v.coefficients) ** 2))) for v in vectors]

    residuals = {
        "train": res(subspace.columns(), train_data) if subspace.kernel_dimension else [],
        "holdout": res(subspace.columns(), hold_data) if subspace.kernel_dimension else [],
        "sparse_holdout": res(sparse, hold_data),
    }
    return DiscoveryResult(subspace, sparse, residuals, train, hold)
