import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopinv import (
    CoefficientVector,
    Dictionary,
    InvalidArgumentError,
    build_dictionary,
    differentiate_trajectory,
    eval_gamma,
    eval_gradients,
    eval_theta,
    grad_theta_at,
)


def brute_terms(n, p, const):
    """Graded order, x1 power leading within a degree."""
    out = []
    for deg in range(0 if const else 1, p + 1):
        same = [a for a in itertools.product(range(deg + 1), repeat=n) if sum(a) == deg]
        out += sorted(same, reverse=True)
    return out


@pytest.mark.parametrize("n,p,const,count", [(3, 1, False, 3), (3, 3, False, 19), (3, 3, True, 20), (1, 4, False, 4), (2, 2, True, 6)])
def test_term_counts_and_order(n, p, const, count):
    d = build_dictionary(n, p, const)
    assert len(d) == count
    assert list(d.terms) == brute_terms(n, p, const)
    assert len(set(d.terms)) == count


def test_degree_one_terms():
    assert list(build_dictionary(3, 1).terms) == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    assert build_dictionary(3, 1).names() == ["x1", "x2", "x3"]


def test_dictionary_validation_and_json():
    with pytest.raises(InvalidArgumentError):
        build_dictionary(0, 2)
    with pytest.raises(InvalidArgumentError):
        build_dictionary(2, 0)
    d = build_dictionary(3, 2, True)
    assert Dictionary.from_json(d.to_json()) == d


def test_theta_examples(dict3):
    th = eval_theta(dict3, np.array([[2.0, 0.0, 0.0], [1.0, 2.0, 3.0]]))
    assert th.shape == (2, 19)
    assert th[0, dict3.index((2, 0, 0))] == 4.0
    assert th[1, dict3.index((1, 1, 1))] == 6.0


def test_theta_against_direct_products(dict3, rng):
    X = rng.standard_normal((50, 3))
    want = np.stack([np.prod(X ** np.array(a), axis=1) for a in dict3.terms], axis=1)
    np.testing.assert_allclose(eval_theta(dict3, X), want, rtol=1e-13, atol=1e-14)


def test_gamma_examples(dict3):
    g = eval_gamma(dict3, [[2.0, 0.0, 0.0]], [[3.0, 0.0, 0.0]])
    assert g[0, dict3.index((2, 0, 0))] == 12.0
    g = eval_gamma(dict3, [[1.0, 2.0, 0.0]], [[5.0, 7.0, 0.0]])
    assert g[0, dict3.index((1, 1, 0))] == 17.0
    dc = build_dictionary(3, 2, True)
    assert eval_gamma(dc, [[1.0, 2.0, 3.0]], [[4.0, 5.0, 6.0]])[0, dc.index((0, 0, 0))] == 0.0


def test_gradient_examples(dict3):
    G = grad_theta_at(dict3, [0.3, -1.0, 2.0])
    assert G.shape == (19, 3)
    np.testing.assert_array_equal(G[dict3.index((0, 0, 1))], [0, 0, 1])
    np.testing.assert_array_equal(grad_theta_at(dict3, [1, 1, 1])[dict3.index((2, 1, 0))], [2, 1, 0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=3, max_size=3))
def test_gradients_match_finite_differences(x):
    d = build_dictionary(3, 3)
    x = np.asarray(x)
    G = grad_theta_at(d, x)
    h = 1e-5
    fd = np.column_stack([
        (eval_theta(d, (x + h * e)[None]) - eval_theta(d, (x - h * e)[None]))[0] / (2 * h) for e in np.eye(3)
    ])
    scale = np.maximum(1.0, np.abs(G))
    assert np.max(np.abs(fd - G) / scale) <= 1e-6


def test_gamma_is_gradient_dot_velocity(dict3, rng):
    X, V = rng.standard_normal((30, 3)), rng.standard_normal((30, 3))
    np.testing.assert_allclose(eval_gamma(dict3, X, V), np.einsum("ikj,ij->ik", eval_gradients(dict3, X), V), atol=1e-13)


def test_shape_validation(dict3):
    with pytest.raises(InvalidArgumentError):
        eval_theta(dict3, np.ones((4, 2)))
    with pytest.raises(InvalidArgumentError):
        eval_gamma(dict3, np.ones((4, 3)), np.ones((3, 3)))
    with pytest.raises(InvalidArgumentError):
        eval_theta(dict3, [[np.nan, 0, 0]])


def test_differentiate_quadratic_and_sine():
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(differentiate_trajectory(t, t ** 2), 2 * t, atol=1e-12)
    t = np.arange(0, 2 * np.pi, 0.01)
    assert np.max(np.abs(differentiate_trajectory(t, np.sin(t)) - np.cos(t))) <= 1e-4
    np.testing.assert_array_equal(differentiate_trajectory(t, np.ones((t.size, 2))), 0.0)
    with pytest.raises(InvalidArgumentError):
        differentiate_trajectory([0.0, 1.0], [1.0, 2.0])


def test_coefficient_vector_roundtrip_and_algebra(dict3):
    L = CoefficientVector.from_terms(dict3, {(2, 0, 0): 0.5, (0, 2, 0): 0.5, (0, 0, 2): 0.5})
    back = CoefficientVector.from_json(dict3, L.to_json())
    assert np.array_equal(back.coefficients, L.coefficients)
    assert len(L.to_json()) == 3
    x = np.array([1.0, 2.0, 3.0])
    assert L(x) == 7.0
    np.testing.assert_allclose(L.gradient(x), x)
    np.testing.assert_allclose((2 * L - L).coefficients, L.coefficients)
    assert abs(np.linalg.norm(L.normalized().coefficients) - 1) < 1e-15
    with pytest.raises(InvalidArgumentError):
        CoefficientVector(dict3, np.ones(5))
    with pytest.raises(InvalidArgumentError):
        L + CoefficientVector(build_dictionary(3, 2), np.ones(9))
