"""
l0-regularized sparse dictionary learning:

    min_{D, W} 1/2 ||I - D W^T||^2 + lam ||W||_0 + X_box(W) + X_unit(D)

with ``I`` the n x p data, ``D`` an n x m dictionary with unit columns and
``W`` the p x m code matrix. As a two-block problem the code matrix is the
``x`` block and the dictionary the ``y`` block.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ipad.error import ConfigError, ShapeError
from ipad.framework import NnpProblem
from ipad.inner import gram_bound
from ipad.prox import project_unit_columns, prox_hard_threshold, spectral_norm

UNIT_NORM_TOL = 1e-8


@dataclass
class SdlInstance:
    data: np.ndarray
    lam: float
    m: int
    bound: Optional[float] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or min(self.data.shape) < 1:
            raise ShapeError('data must be a nonempty n x p matrix')
        if self.m < 1:
            raise ConfigError('dictionary needs at least one atom')
        if self.lam < 0:
            raise ConfigError('lam must be nonnegative, got %r' % (self.lam,))
        if self.bound is not None and not self.bound > 0:
            raise ConfigError('box bound must be positive, got %r'
                              % (self.bound,))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]

    def check_shapes(self, D, W):
        if D.shape != (self.n, self.m) or W.shape != (self.p, self.m):
            raise ShapeError('expected D %r and W %r, got %r and %r' % (
                (self.n, self.m), (self.p, self.m), D.shape, W.shape))


def is_unit_dictionary(D, tol=UNIT_NORM_TOL):
    return bool(np.all(np.abs(np.linalg.norm(D, axis=0) - 1.0) <= tol))


def is_boxed(W, bound):
    return bound is None or bool(np.all(np.abs(W) <= bound))


def data_fit(inst, D, W):
    return 0.5 * float(np.sum((inst.data - D @ W.T) ** 2))


def sdl_objective(inst, D, W):
    """
    Full objective; ``inf`` when D or W leaves its constraint set.
    """
    inst.check_shapes(D, W)
    if not is_unit_dictionary(D) or not is_boxed(W, inst.bound):
        return np.inf
    return data_fit(inst, D, W) + inst.lam * np.count_nonzero(W)


def grad_H_w(inst, D, W):
    inst.check_shapes(D, W)
    return W @ (D.T @ D) - inst.data.T @ D


def grad_H_d(inst, D, W):
    inst.check_shapes(D, W)
    return (D @ W.T - inst.data) @ W


class SdlProblem(NnpProblem):
    """
    Oracle bundle of a `SdlInstance`; ``x`` is W and ``y`` is D.
    """

    def __init__(self, instance):
        self.instance = instance
        self._data_norm = _rough_norm(instance.data)

    def f_value(self, W):
        if not is_boxed(W, self.instance.bound):
            return np.inf
        return self.instance.lam * np.count_nonzero(W)

    def g_value(self, D):
        return 0.0 if is_unit_dictionary(D) else np.inf

    def H_value(self, W, D):
        self.instance.check_shapes(D, W)
        return data_fit(self.instance, D, W)

    def grad_H_x(self, W, D):
        return grad_H_w(self.instance, D, W)

    def grad_H_y(self, W, D):
        return grad_H_d(self.instance, D, W)

    def prox_f(self, v, tau):
        return prox_hard_threshold(v, tau, self.instance.lam,
                                   self.instance.bound)

    def prox_g(self, v, tau):
        # projections do not depend on the weight
        return project_unit_columns(v)

    def lipschitz(self, W, D):
        d_norm = _rough_norm(D)
        w_norm = _rough_norm(W)
        return d_norm ** 2 + w_norm ** 2 + 2 * d_norm * w_norm + \
            self._data_norm

    def block_shapes(self):
        inst = self.instance
        return (inst.p, inst.m), (inst.n, inst.m)


def _rough_norm(A):
    # diagnostics only, a loose estimate is enough
    return spectral_norm(A, tol=1e-3, max_iter=500, full_output=True)[0]


def as_nnp(instance):
    return SdlProblem(instance)


def code_lipschitz(D):
    """``||D^T D||_2``, the Lipschitz constant of grad_W H."""
    return gram_bound(D)


def dictionary_lipschitz(W):
    """``||W^T W||_2``, the Lipschitz constant of grad_D H."""
    return gram_bound(W)
