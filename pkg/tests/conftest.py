import numpy as np
import pytest

from argus.core import BilevelProblem, ProblemDims


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class ScalarQuadUpper(BilevelProblem):
    """Single-agent toy: G = 0.5 ||x||^2, g = 0.5 ||y||^2, no non-smooth terms."""

    def __init__(self, n=1):
        super().__init__(ProblemDims(n=n, m=n, N=1))

    def eval_G(self, i, x, y):
        return 0.5 * float(x @ x)

    def grad_G_x(self, i, x, y):
        return x.copy()

    def grad_G_y(self, i, x, y):
        return np.zeros_like(y)

    def eval_g(self, i, x, y):
        return 0.5 * float(y @ y)

    def grad_g_x(self, i, x, y):
        return np.zeros_like(x)

    def grad_g_y(self, i, x, y):
        return y.copy()


class ZeroProblem(BilevelProblem):
    """All oracles zero; isolates dual/consensus terms in tests."""

    def __init__(self, N=2, n=1, m=1):
        super().__init__(ProblemDims(n=n, m=m, N=N))

    def eval_G(self, i, x, y):
        return 0.0

    def grad_G_x(self, i, x, y):
        return np.zeros_like(x)

    def grad_G_y(self, i, x, y):
        return np.zeros_like(y)

    def eval_g(self, i, x, y):
        return 0.0

    def grad_g_x(self, i, x, y):
        return np.zeros_like(x)

    def grad_g_y(self, i, x, y):
        return np.zeros_like(y)
