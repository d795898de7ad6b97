"""
Inner iteration schemes plugged into the IPAD block acceptance loop.

Every solver follows the same small facade: ``reset(u_prev, v, eta)``
prepares the subproblem ``min h(u) + H(u, v) + eta/2 ||u - u_prev||^2`` for
one outer step and ``step()`` returns the next candidate.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from ipad.error import ConfigError, FactorizationError, NonFiniteError
from ipad.prox import project_unit_columns, prox_hard_threshold, spectral_norm

logger = logging.getLogger(__name__)

LIPSCHITZ_TOL = 1e-8


def gram_bound(A):
    """
    ``||A^T A||_2`` by power iteration. Falls back to the squared Frobenius
    norm, an upper bound, when the iteration does not converge.
    """
    sigma, converged = spectral_norm(A, tol=LIPSCHITZ_TOL, full_output=True)
    if not np.isfinite(sigma):
        raise NonFiniteError('spectral_norm')
    if not converged:
        logger.warning('using the Frobenius bound for shape %r', np.shape(A))
        return float(np.sum(np.square(A)))
    return sigma ** 2


@dataclass
class PithConfig:
    step_scale: float = 1.01
    max_steps: Optional[int] = None

    def __post_init__(self):
        if not self.step_scale >= 1:
            raise ConfigError('PITH step_scale must be >= 1, got %r'
                              % (self.step_scale,))
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError('PITH max_steps must be positive')


@dataclass
class AdmmConfig:
    rho: Optional[float] = None
    max_steps: Optional[int] = None
    refactor_policy: str = 'per-outer-step'

    def __post_init__(self):
        if self.rho is not None and not self.rho > 0:
            raise ConfigError('ADMM rho must be positive, got %r'
                              % (self.rho,))
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError('ADMM max_steps must be positive')
        if self.refactor_policy != 'per-outer-step':
            raise ConfigError('unknown refactor policy %r'
                              % (self.refactor_policy,))


@dataclass
class ProxLinearState:
    """
    ``grad`` is the gradient of the smooth part, ``lipschitz`` its bound
    and ``prox(v, tau)`` the proximal mapping of the block regularizer.
    """
    grad: Callable
    lipschitz: float
    prox: Callable


def prox_linear_step(u, state):
    """
    One prox-linear step: ``prox(u - grad(u) / L, L)``.
    """
    if not state.lipschitz > 0:
        raise ConfigError('prox-linear step needs L > 0, got %r'
                          % (state.lipschitz,))
    L = state.lipschitz
    return state.prox(u - state.grad(u) / L, L)


@dataclass
class PithState:
    D: np.ndarray
    data: np.ndarray
    eta: float
    W_prev: np.ndarray
    lam: float
    bound: Optional[float] = None
    step_scale: float = 1.01
    lipschitz: Optional[float] = None
    data_dict: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.lipschitz is None:
            self.lipschitz = self.step_scale * (gram_bound(self.D) + self.eta)
        if self.data_dict is None:
            self.data_dict = self.data.T @ self.D


def pith_step(W, state):
    """
    Proximal iterative hard-thresholding step on the code subproblem.

    The smooth part ``1/2 ||I - D W^T||^2 + eta/2 ||W - W_prev||^2`` has
    gradient ``W D^T D - I^T D + eta (W - W_prev)``.
    """
    grad = (W @ state.D.T) @ state.D - state.data_dict \
        + state.eta * (W - state.W_prev)
    L = state.lipschitz
    return prox_hard_threshold(W - grad / L, L, state.lam, state.bound)


@dataclass
class AdmmState:
    W: np.ndarray
    data: np.ndarray
    eta: float
    D_prev: np.ndarray
    rho: float
    gram: np.ndarray = None
    factor: tuple = None
    rhs: np.ndarray = None

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError('ADMM rho must be positive, got %r'
                              % (self.rho,))
        if self.gram is None:
            self.gram = self.W.T @ self.W
        if self.factor is None:
            system = self.gram + (self.eta + self.rho) * np.eye(
                self.gram.shape[0])
            try:
                self.factor = scipy.linalg.cho_factor(system)
            except (np.linalg.LinAlgError, ValueError) as e:
                raise FactorizationError('cannot factorize ADMM system: %s'
                                         % e)
        if self.rhs is None:
            self.rhs = self.data @ self.W + self.eta * self.D_prev


def admm_d_solve_step(D, Z, U, state):
    """
    One ADMM sweep on the dictionary subproblem with splitting ``D = Z``.

    ``D`` solves ``D (W^T W + (eta + rho) Id) = I W + eta D_prev +
    rho (Z - U)`` with the cached Cholesky factor, ``Z`` is the unit-column
    projection of ``D + U`` and ``U`` accumulates ``D - Z``.
    """
    rhs = state.rhs + state.rho * (Z - U)
    D = scipy.linalg.cho_solve(state.factor, rhs.T).T
    Z = project_unit_columns(D + U)
    U = U + D - Z
    return D, Z, U


def admm_kkt_residual(Z, state):
    """
    Norm of the gradient of the dictionary subproblem at ``Z`` projected
    onto the tangent space of the unit-column constraint.
    """
    G = Z @ (state.gram + state.eta * np.eye(state.gram.shape[0])) \
        - state.rhs
    G = G - Z * np.sum(Z * G, axis=0)
    return float(np.linalg.norm(G))


class InnerSolver(object):
    """
    Facade for inner iteration schemes.
    """
    name = None
    max_steps = None
    # every step keeps the subproblem objective from increasing
    monotone = False

    def reset(self, u_prev, v, eta):
        raise NotImplementedError  # pragma: no cover

    def step(self):
        raise NotImplementedError  # pragma: no cover

    def _checked(self, u):
        if not np.all(np.isfinite(u)):
            raise NonFiniteError('inner:%s' % self.name)
        return u


class ProxLinearSolver(InnerSolver):
    """
    Prox-linear steps on the full subproblem, any block of any problem.

    ``grad_H(u, v)`` is the block gradient of H, ``lipschitz(v)`` a bound
    on its Lipschitz constant for fixed ``v`` and ``prox(v, tau)`` the block
    regularizer's prox. The step weight is ``step_scale * (L + eta)``, so
    the first step from ``u_prev`` is exactly a PALM step.
    """
    name = 'prox-linear'

    def __init__(self, prox, grad_H, lipschitz, step_scale=1.0,
                 max_steps=None, name=None):
        self.prox = prox
        self.grad_H = grad_H
        self.lipschitz = lipschitz
        self.step_scale = step_scale
        self.monotone = step_scale >= 1
        self.max_steps = max_steps
        if name is not None:
            self.name = name
        self._u = None
        self._state = None

    def reset(self, u_prev, v, eta):
        L = self.step_scale * (self.lipschitz(v) + eta)

        def grad(u):
            return self.grad_H(u, v) + eta * (u - u_prev)

        self._state = ProxLinearState(grad=grad, lipschitz=L, prox=self.prox)
        self._u = u_prev

    def step(self):
        self._u = self._checked(prox_linear_step(self._u, self._state))
        return self._u


class PithSolver(InnerSolver):
    """
    PITH on the code block ``W`` of a sparse dictionary learning instance;
    ``v`` is the current dictionary.
    """
    name = 'pith'
    monotone = True

    def __init__(self, instance, config=None):
        self.instance = instance
        self.config = config or PithConfig()
        self.max_steps = self.config.max_steps
        self._W = None
        self._state = None

    def reset(self, u_prev, v, eta):
        self._state = PithState(D=v, data=self.instance.data, eta=eta,
                                W_prev=u_prev, lam=self.instance.lam,
                                bound=self.instance.bound,
                                step_scale=self.config.step_scale)
        self._W = u_prev

    def step(self):
        self._W = self._checked(pith_step(self._W, self._state))
        return self._W


class AdmmDictionarySolver(InnerSolver):
    """
    ADMM on the dictionary block ``D``; ``v`` is the freshly updated code
    matrix. The candidate handed back is ``Z``, which always has unit
    columns. ``(Z, U)`` are warm-started from the previous outer step.
    """
    name = 'admm'

    def __init__(self, instance, config=None):
        self.instance = instance
        self.config = config or AdmmConfig()
        self.max_steps = self.config.max_steps
        self.state = None
        self._D = self._Z = self._U = None

    def default_rho(self, W, eta):
        # curvature of the D subproblem
        return gram_bound(W) + eta

    def reset(self, u_prev, v, eta):
        rho = self.config.rho or self.default_rho(v, eta)
        warm = self._Z is not None and self._Z.shape == u_prev.shape
        if warm:
            # scaled dual follows the penalty
            U = self._U * (self.state.rho / rho)
            Z = self._Z
        else:
            Z = project_unit_columns(u_prev)
            U = np.zeros_like(u_prev)
        self.state = AdmmState(W=v, data=self.instance.data, eta=eta,
                               D_prev=u_prev, rho=rho)
        self._D, self._Z, self._U = u_prev, Z, U

    def step(self):
        self._D, self._Z, self._U = admm_d_solve_step(self._D, self._Z,
                                                      self._U, self.state)
        return self._checked(self._Z)

    def kkt_residual(self):
        return admm_kkt_residual(self._Z, self.state)
