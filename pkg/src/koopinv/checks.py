"""Reference invariants and the pass/fail checks run by ``koopinv reproduce``.

Each check returns a :class:`CheckResult` with the measured value next to the
threshold it is compared against.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .actuation import estimate_B, kron_row
from .bracket import BracketKind, bracket_from_gradients, discover_via_bracket, recover_vector_field
from .discovery import discover_invariants, largest_principal_angle
from .features import CoefficientVector, build_dictionary
from .systems import (
    angular_momentum,
    integrate,
    kinetic_energy,
    linear_decay,
    paper_forcing,
    rigid_body,
    rigid_body_rhs,
    sample_momentum_shell,
)


@dataclass
class CheckResult:
    key: str
    description: str
    measured: str
    threshold: str
    passed: bool

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.key}: {self.description} ({self.measured}; need {self.threshold})"


def rigid_body_invariants(dictionary, inertia):
    """Coefficient vectors of L = |Pi|^2 / 2 and H = sum Pi_i^2 / (2 I_i)."""
    if dictionary.n != 3 or dictionary.degree < 2:
        raise ValueError("rigid-body invariants need n = 3 and degree >= 2")
    I = np.asarray(inertia, dtype=float)
    sq = [(2, 0, 0), (0, 2, 0), (0, 0, 2)]
    L = CoefficientVector.from_terms(dictionary, {a: 0.5 for a in sq})
    H = CoefficientVector.from_terms(dictionary, {a: 0.5 / I[i] for i, a in enumerate(sq)})
    return L, H


def _fmt(x):
    return f"{x:.3g}"


# -- discovery ------------------------------------------------------------

def check_kernel(subspace, elapsed):
    s = subspace.singular_values
    d = subspace.kernel_dimension
    s1 = s[0]
    tail = s[-2:] / s1 if s.size >= 2 else np.array([np.inf])
    gap = s[-3] / s1 if s.size >= 3 else 0.0
    ok = d == 2 and np.all(tail <= 1e-8) and gap >= 1e-4 and elapsed <= 60.0
    return CheckResult(
        "1", "null-space dimension and spectral gap",
        f"d={d}, sigma_P-1/s1={_fmt(tail[0])}, sigma_P/s1={_fmt(tail[-1])}, sigma_P-2/s1={_fmt(gap)}, {elapsed:.1f}s",
        "d=2, tail<=1e-8, gap>=1e-4, <=60s", bool(ok),
    )


def check_span(subspace, inertia):
    L, H = rigid_body_invariants(subspace.dictionary, inertia)
    ref = np.column_stack([L.coefficients, H.coefficients])
    if subspace.kernel_dimension != 2:
        return CheckResult("2", "subspace matches span{L, H}", f"d={subspace.kernel_dimension}", "angle<=1e-6 rad", False)
    ang = largest_principal_angle(ref, subspace.basis)
    return CheckResult("2", "subspace matches span{L, H}", f"angle={_fmt(ang)} rad", "<=1e-6 rad", ang <= 1e-6)


def check_sparse_L(sparse, dictionary, inertia):
    L, _ = rigid_body_invariants(dictionary, inertia)
    l = L.normalized().coefficients
    cos = max((abs(float(v.normalized().coefficients @ l)) for v in sparse), default=0.0)
    return CheckResult("3", "a sparse vector aligns with L", f"1-cos={_fmt(max(0.0, 1 - cos))}", "<=1e-6", 1 - cos <= 1e-6)


def check_involution(matrix, tol=1e-3):
    k = matrix.shape[0]
    off = float(np.max(matrix[~np.eye(k, dtype=bool)])) if k > 1 else 0.0
    return CheckResult("4", "candidates are in involution", f"max RMS bracket={_fmt(off)}", f"<={tol:g}", off <= tol)


# -- bracket --------------------------------------------------------------

def check_bracket_discovery(dictionary, inertia, X):
    _, H = rigid_body_invariants(dictionary, inertia)
    sub = discover_via_bracket(dictionary, H, dictionary, X, sparsify_basis=False)
    L, _ = rigid_body_invariants(dictionary, inertia)
    if sub.kernel_dimension == 0:
        return CheckResult("5", "D-matrix null space contains L", "empty null space", "angle<=1e-6 rad", False)
    ang = largest_principal_angle(sub.basis, L.coefficients[:, None])
    return CheckResult("5", "D-matrix null space contains L",
                       f"d={sub.kernel_dimension}, angle={_fmt(ang)} rad", "<=1e-6 rad", ang <= 1e-6)


def check_vector_field(inertia, seed, count=1000):
    dic = build_dictionary(3, 2)
    _, H = rigid_body_invariants(dic, inertia)
    P = np.random.default_rng(seed).uniform(-2.0, 2.0, size=(count, 3))
    got = recover_vector_field(dic, H, P)
    want = np.array([rigid_body_rhs(p, np.zeros(3), inertia) for p in P])
    err = float(np.max(np.abs(got - want)))
    return CheckResult("6", "vector field from the bracket", f"max err={_fmt(err)}", "<=1e-10", err <= 1e-10)


# -- actuation ------------------------------------------------------------

def check_B(B_hat, B_true, dictionary, subspace, inertia, seed):
    err = float(np.max(np.abs(B_hat - B_true)))
    rng = np.random.default_rng(seed + 7)
    B_syn = rng.standard_normal((3, 3))
    spec = rigid_body(inertia, B_syn)
    X0 = sample_momentum_shell(4, seed=seed + 7)
    data = [integrate(spec, x, paper_forcing(), t_end=1.0, dt=0.01) for x in X0]
    syn = float(np.max(np.abs(estimate_B(dictionary, subspace, data).B_hat - B_syn)))
    return CheckResult(
        "7", "control matrix identification",
        f"max|B_hat-B|={_fmt(err)}, synthetic={_fmt(syn)}", "<=1e-2 and <=1e-6",
        err <= 1e-2 and syn <= 1e-6,
    )


# -- control --------------------------------------------------------------

def check_closed_loop(results, elapsed, label, C_tol=1e-2, dist_tol=0.05):
    n = len(results)
    conv = sum(r.converged and bool(np.all(r.final_error <= C_tol)) for r in results)
    near = sum(r.final_distance <= dist_tol for r in results)
    ok = conv == n and near == n and elapsed <= 300.0
    return CheckResult(
        f"8{label}", f"closed loop with {'true B' if label == 'a' else 'identified B'}",
        f"C within {C_tol:g}: {conv}/{n}, state within {dist_tol:g} of +-Pi*: {near}/{n}, {elapsed:.1f}s",
        "all trajectories on both counts, <=300s", bool(ok),
    )


# -- property spot checks -------------------------------------------------

def check_properties(inertia, seed):
    rng = np.random.default_rng(seed + 11)
    msgs, ok = [], True

    X, A, B, C = (rng.standard_normal((10_000, 3)) for _ in range(4))
    lp = BracketKind.LIE_POISSON_SO3
    anti = np.max(np.abs(bracket_from_gradients(lp, A, B, X) + bracket_from_gradients(lp, B, A, X)))
    lin = np.max(np.abs(bracket_from_gradients(lp, 2 * A + C, B, X)
                        - 2 * bracket_from_gradients(lp, A, B, X) - bracket_from_gradients(lp, C, B, X)))
    cas = np.max(np.abs(bracket_from_gradients(lp, X, B, X)))  # grad L = x
    ok &= anti <= 1e-12 and lin <= 1e-10 and cas <= 1e-12
    msgs.append(f"bracket {max(anti, lin, cas):.1e}")

    dic = build_dictionary(3, 3)
    x = rng.standard_normal(3)
    G = kernels.monomial_gradients(x[None, :], dic.exponents)[0]
    eps = 1e-6
    fd = np.column_stack([
        (kernels.monomial_values((x + eps * e)[None, :], dic.exponents)[0]
         - kernels.monomial_values((x - eps * e)[None, :], dic.exponents)[0]) / (2 * eps)
        for e in np.eye(3)
    ])
    rel = float(np.max(np.abs(fd - G)) / max(1.0, np.max(np.abs(G))))
    ok &= rel <= 1e-6
    msgs.append(f"gradient fd {rel:.1e}")

    spec = rigid_body(inertia)
    x0 = np.array([0.3, 0.8, -0.5])
    ref = integrate(spec, x0, t_end=1.0, dt=1e-4).states[-1]
    errs = [np.linalg.norm(integrate(spec, x0, t_end=1.0, dt=h).states[-1] - ref) for h in (0.04, 0.02)]
    factor = errs[0] / errs[1]
    ok &= 14.0 <= factor <= 18.0
    msgs.append(f"RK4 factor {factor:.2f}")

    tr = integrate(spec, x0, t_end=10.0, dt=0.01).states
    drift = max(np.ptp(angular_momentum(tr)), np.ptp(kinetic_energy(tr, inertia)))
    ok &= drift <= 1e-8
    msgs.append(f"drift {drift:.1e}")

    g, u, Bm = rng.standard_normal(3), rng.standard_normal(3), rng.standard_normal((3, 3))
    kr = abs(kron_row(g, u) @ Bm.reshape(-1) - g @ Bm @ u)
    ok &= kr <= 1e-12
    msgs.append(f"kron {kr:.1e}")
    return CheckResult("9", "property spot checks", ", ".join(msgs), "see criteria", bool(ok))


def check_nonzero_lambda(seed):
    spec = linear_decay(1, 1.0)
    data = [integrate(spec, [x0], t_end=2.0, dt=0.01) for x0 in (0.5, 1.0, -1.5)]
    dic = build_dictionary(1, 3)
    res = discover_invariants(dic, data, lam=-1.0, holdout_fraction=0.0, seed=seed)
    if res.subspace.kernel_dimension != 1:
        return CheckResult("10", "eigenfunction at lambda=-1 on xdot=-x",
                           f"d={res.subspace.kernel_dimension}", "phi ~ x1, residual<=1e-8", False)
    v = res.subspace.basis[:, 0]
    lead = abs(v[dic.index((1,))]) / np.linalg.norm(v)
    r = res.residuals["train"][0]
    return CheckResult("10", "eigenfunction at lambda=-1 on xdot=-x",
                       f"|cos(phi, x1)|={lead:.12f}, residual={_fmt(r)}", "phi ~ x1, residual<=1e-8",
                       bool(abs(1 - lead) <= 1e-10 and r <= 1e-8))


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


__all__ = [
    "CheckResult",
    "rigid_body_invariants",
    "check_kernel",
    "check_span",
    "check_sparse_L",
    "check_involution",
    "check_bracket_discovery",
    "check_vector_field",
    "check_B",
    "check_closed_loop",
    "check_properties",
    "check_nonzero_lambda",
    "timed",
]
