import numpy as np
import pytest

from ipad.data import GrayImage, SyntheticSpec, gen_synthetic
from ipad.framework import NnpProblem

pytest_plugins = 'pytester'


class QuadraticProblem(NnpProblem):
    """
    ``a/2 ||x - p||^2 + b/2 ||y - q||^2 + gamma/2 ||x - y||^2``: smooth
    regularizers with closed-form proximal maps and alternating
    minimizers.
    """

    def __init__(self, p, q, a=1.0, b=2.0, gamma=0.5):
        self.p = np.asarray(p, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.a, self.b, self.gamma = a, b, gamma

    def f_value(self, x):
        return 0.5 * self.a * float(np.sum((x - self.p) ** 2))

    def g_value(self, y):
        return 0.5 * self.b * float(np.sum((y - self.q) ** 2))

    def H_value(self, x, y):
        return 0.5 * self.gamma * float(np.sum((x - y) ** 2))

    def grad_H_x(self, x, y):
        return self.gamma * (x - y)

    def grad_H_y(self, x, y):
        return self.gamma * (y - x)

    def prox_f(self, v, tau):
        return (self.a * self.p + tau * v) / (self.a + tau)

    def prox_g(self, v, tau):
        return (self.b * self.q + tau * v) / (self.b + tau)

    def smooth_subgrad_f(self, x):
        return self.a * (x - self.p)

    def smooth_subgrad_g(self, y):
        return self.b * (y - self.q)

    def lipschitz(self, x, y):
        return 2.0 * self.gamma

    def exact_x(self, x_prev, y, eta):
        return (self.a * self.p + self.gamma * y + eta * x_prev) / \
            (self.a + self.gamma + eta)

    def exact_y(self, y_prev, x, eta):
        return (self.b * self.q + self.gamma * x + eta * y_prev) / \
            (self.b + self.gamma + eta)

    def minimizer(self):
        """Joint minimizer, from the stationarity linear system."""
        n = self.p.size
        eye = np.eye(n)
        system = np.block([[(self.a + self.gamma) * eye, -self.gamma * eye],
                           [-self.gamma * eye, (self.b + self.gamma) * eye]])
        rhs = np.concatenate([self.a * self.p.ravel(),
                              self.b * self.q.ravel()])
        z = np.linalg.solve(system, rhs)
        return z[:n].reshape(self.p.shape), z[n:].reshape(self.q.shape)


@pytest.fixture
def quadratic():
    """
    Returns a factory for `QuadraticProblem` instances.
    """
    def make(shape=(3, 2), seed=0, **kwargs):
        rng = np.random.default_rng(seed)
        return QuadraticProblem(rng.standard_normal(shape),
                                rng.standard_normal(shape), **kwargs)
    return make


@pytest.fixture
def tiny_sdl():
    """
    Small noisy synthetic instance (n=4, m=6, p=20) with its ground truth.
    """
    return gen_synthetic(SyntheticSpec(n=4, m=6, p=20, k=2,
                                       noise_sigma=0.01, lam=0.01, seed=3))


def make_test_image(size=128):
    y, x = np.mgrid[0:size, 0:size].astype(float)
    pixels = 110 + 50 * np.sin(x / 9.0) * np.cos(y / 13.0) + 0.3 * x
    pixels[(x - size / 2) ** 2 + (y - size / 3) ** 2 < (size / 5) ** 2] = 200
    pixels[y > 0.8 * size] = 40
    return GrayImage.from_array(np.clip(np.rint(pixels), 0, 255))


@pytest.fixture(scope='session')
def test_image():
    """
    Returns a factory of deterministic grayscale images with smooth shading
    and a few sharp edges.
    """
    return make_test_image
