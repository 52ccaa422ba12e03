import numpy as np
import pytest

from koopinv import (
    build_dictionary,
    build_generator_matrix,
    integrate_ensemble,
    null_space,
    rigid_body,
    sample_momentum_shell,
)

INERTIA = (1.0, 0.5, 1.0 / 3.0)


def analytic_LH(dictionary, inertia=INERTIA):
    """L and H coefficient vectors written out by hand, independent of the library helper."""
    L = np.zeros(len(dictionary))
    H = np.zeros(len(dictionary))
    for i, alpha in enumerate([(2, 0, 0), (0, 2, 0), (0, 0, 2)]):
        k = dictionary.terms.index(alpha)
        L[k] = 0.5
        H[k] = 0.5 / inertia[i]
    return L, H


@pytest.fixture(scope="session")
def body():
    return rigid_body(INERTIA)


@pytest.fixture(scope="session")
def dict3():
    return build_dictionary(3, 3)


@pytest.fixture(scope="session")
def shell_data(body):
    return integrate_ensemble(body, sample_momentum_shell(24, seed=3), t_end=5.0, dt=0.01)


@pytest.fixture(scope="session")
def subspace(dict3, shell_data):
    return null_space(build_generator_matrix(dict3, shell_data), dictionary=dict3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
