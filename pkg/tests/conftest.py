import numpy as np
import pytest

from poisolve.grid import make_problem


def square_problem(n, sides=(0.3, -0.2, 0.8, 0.1), f=None):
    """Square domain with constant per-side boundary values."""
    mask = np.zeros((n, n), dtype=np.uint8)
    mask[1:-1, 1:-1] = 1
    b = np.zeros((n, n))
    b[0, :], b[-1, :] = sides[0], sides[1]
    b[1:-1, 0], b[1:-1, -1] = sides[2], sides[3]
    return make_problem(mask, b, np.zeros((n, n)) if f is None else f)


@pytest.fixture
def p17():
    return square_problem(17)


@pytest.fixture
def p17_poisson():
    rng = np.random.default_rng(99)
    f = rng.standard_normal((17, 17))
    return square_problem(17, f=f)
