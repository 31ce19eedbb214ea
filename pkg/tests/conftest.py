import numpy as np
import pytest

import lcstrack as lt


def duffing_energy(points: np.ndarray) -> np.ndarray:
    """Hamiltonian H = x^4/4 - 2 x^2 + y^2/2 of the built-in Duffing field."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return 0.25 * p[..., 0] ** 4 - 2.0 * p[..., 0] ** 2 + 0.5 * p[..., 1] ** 2


def saddle_expm(T: float = 2.5) -> np.ndarray:
    """exp(T * [[0, 1], [4, 0]]), the linearized Duffing flow at the origin."""
    from scipy.linalg import expm
    return expm(T * np.array([[0.0, 1.0], [4.0, 0.0]]))


def tiny_gridded_field(periodic=(False, False), nt=2, n=9,
                       bounds=(-1.0, 1.0, -1.0, 1.0), fn=None):
    """Small gridded field; fn(X, Y, t) -> (u, v) defaults to (1, 0)."""
    x_min, x_max, y_min, y_max = bounds
    if periodic[0]:
        xs = x_min + (x_max - x_min) * np.arange(n) / n
    else:
        xs = np.linspace(x_min, x_max, n)
    if periodic[1]:
        ys = y_min + (y_max - y_min) * np.arange(n) / n
    else:
        ys = np.linspace(y_min, y_max, n)
    X, Y = np.meshgrid(xs, ys)
    times = np.linspace(0.0, 1.0, nt)
    u = np.empty((nt, n, n))
    v = np.empty((nt, n, n))
    for k, t in enumerate(times):
        if fn is None:
            u[k], v[k] = np.ones_like(X), np.zeros_like(X)
        else:
            u[k], v[k] = fn(X, Y, t)
    return lt.gridded_field(bounds, periodic, times, u, v)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure the algorithms."""
    f = lt.duffing_field()
    lt.advect_point(f, np.array([0.1, 0.1]), 0.0, 0.01)
    lt.deformation_gradient_at_points(f, np.array([[0.1, 0.1]]), 0.0, 0.01)
    g = tiny_gridded_field()
    lt.advect_point(g, np.array([0.0, 0.0]), 0.0, 0.01)
    lt.deformation_gradient_at_points(g, np.array([[0.0, 0.0]]), 0.0, 0.01,
                                      rho=1e-5)
    g.eval(np.array([[0.0, 0.0]]), 0.0)
