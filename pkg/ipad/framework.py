"""
Inexact proximal alternating direction (IPAD) outer loop for two-block
problems ``min f(x) + g(y) + H(x, y)``.

Each outer step updates ``x`` then ``y``. A block update runs an inner
solver on the proximal subproblem and accepts the first candidate whose
implementable error satisfies ``||e|| <= C * ||u_tilde - u_prev||`` (plus a
tiny absolute floor), where ``u_tilde`` is the prox-corrected candidate
computed by `evaluate_inexactness`.
"""
import logging
import time
from dataclasses import dataclass, replace
from typing import List

import numpy as np

from ipad.error import (ConfigError, InfeasibleStartError, NonFiniteError,
                        ShapeError)

logger = logging.getLogger(__name__)

STOP_MODES = ('synthetic', 'real')
STALL_POLICIES = ('stop', 'continue')
MACHINE_FLOOR = np.finfo(float).tiny

CONVERGED = 'converged'
MAX_OUTER = 'max_outer'
STALLED = 'stalled'


@dataclass(frozen=True)
class BlockPoint:
    x: np.ndarray
    y: np.ndarray


class NnpProblem(object):
    """
    Oracle bundle for ``Psi(x, y) = f(x) + g(y) + H(x, y)``.

    ``prox_f(v, tau)`` must return a global minimizer of
    ``f(z) + tau/2 ||z - v||^2`` (same for ``prox_g``). All oracles are pure
    functions of their inputs.
    """

    def f_value(self, x):
        raise NotImplementedError  # pragma: no cover

    def g_value(self, y):
        raise NotImplementedError  # pragma: no cover

    def H_value(self, x, y):
        raise NotImplementedError  # pragma: no cover

    def grad_H_x(self, x, y):
        raise NotImplementedError  # pragma: no cover

    def grad_H_y(self, x, y):
        raise NotImplementedError  # pragma: no cover

    def prox_f(self, v, tau):
        raise NotImplementedError  # pragma: no cover

    def prox_g(self, v, tau):
        raise NotImplementedError  # pragma: no cover

    # optional oracles, only defined for smooth regularizers
    smooth_subgrad_f = None
    smooth_subgrad_g = None

    def block_shapes(self):
        """``(x_shape, y_shape)`` the oracles expect, or ``None``."""
        return None

    def lipschitz(self, x, y):
        """
        Estimate of the Lipschitz constant of grad H around ``(x, y)``;
        diagnostics only. ``None`` when unknown.
        """
        return None

    def objective(self, x, y):
        return self.f_value(x) + self.g_value(y) + self.H_value(x, y)


@dataclass
class IpadConfig:
    """
    Parameters of an IPAD solve.

    ``eta1``/``eta2`` are proximal weights for the x and y blocks: a float,
    a sequence indexed by outer step (its last value repeats) or ``None``
    for ``max(2.5 * C, 1e-3)``. Assumption ``eta > 2 C`` is checked here.
    """
    c_x: float = 1.0
    c_y: float = 1.0
    eta1: object = None
    eta2: object = None
    max_outer: int = 500
    max_inner: int = 20
    outer_tol: float = 1e-4
    stop_mode: str = 'synthetic'
    abs_error_floor: float = 1e-12
    stall_policy: str = 'stop'
    record_time: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.c_x < 0 or self.c_y < 0:
            raise ConfigError('error constants must be nonnegative, got '
                              'c_x=%r c_y=%r' % (self.c_x, self.c_y))
        if self.eta1 is None:
            self.eta1 = max(2.5 * self.c_x, 1e-3)
        if self.eta2 is None:
            self.eta2 = max(2.5 * self.c_y, 1e-3)
        for name, schedule, c in (('eta1', self.eta1, self.c_x),
                                  ('eta2', self.eta2, self.c_y)):
            values = schedule_values(schedule)
            if not values:
                raise ConfigError('%s schedule is empty' % name)
            for eta in values:
                if not eta > 0 or not eta > 2 * c:
                    raise ConfigError(
                        '%s=%r violates eta > 2*C (C=%r)' % (name, eta, c))
        if self.max_outer < 1 or self.max_inner < 1:
            raise ConfigError('max_outer and max_inner must be positive')
        if not self.outer_tol > 0:
            raise ConfigError('outer_tol must be positive')
        if self.stop_mode not in STOP_MODES:
            raise ConfigError('unknown stop mode %r' % (self.stop_mode,))
        if self.stall_policy not in STALL_POLICIES:
            raise ConfigError('unknown stall policy %r' % (self.stall_policy,))
        if self.abs_error_floor < 0:
            raise ConfigError('abs_error_floor must be nonnegative')

    def eta_x(self, t):
        return schedule_at(self.eta1, t)

    def eta_y(self, t):
        return schedule_at(self.eta2, t)


def schedule_values(schedule):
    if np.isscalar(schedule):
        return [float(schedule)]
    return [float(v) for v in schedule]


def schedule_at(schedule, t):
    if np.isscalar(schedule):
        return float(schedule)
    return float(schedule[min(t, len(schedule) - 1)])


@dataclass
class IterationRecord:
    t: int
    psi: float
    dx_norm: float
    dy_norm: float
    ex_norm: float
    ey_norm: float
    inner_x: int
    inner_y: int
    elapsed: float
    dx_rel: float = 0.0
    dy_rel: float = 0.0
    dpsi_rel: float = 0.0
    floor_x: float = 0.0
    floor_y: float = 0.0
    capped_x: bool = False
    capped_y: bool = False
    monotone_x: bool = True
    monotone_y: bool = True
    lipschitz: float = float('nan')


@dataclass
class SolveResult:
    final: BlockPoint
    trace: List[IterationRecord]
    termination: str
    initial_psi: float
    variant: str = 'ipad'
    lipschitz_max: float = 0.0

    @property
    def outer_iterations(self):
        return len(self.trace)

    @property
    def final_psi(self):
        return self.trace[-1].psi


@dataclass
class BlockUpdate:
    u: np.ndarray
    inner_count: int
    e_norm: float
    delta_norm: float
    floor: float
    capped: bool = False
    # block did not increase its proximal subproblem
    monotone: bool = True


@dataclass
class OuterState:
    x: np.ndarray
    y: np.ndarray
    psi: float


def _check_finite(value, oracle):
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(oracle)
    return value


def evaluate_inexactness(u_raw, u_prev, v_other, prox_h, grad_H_u, eta):
    """
    Implementable error of an inner candidate ``u_raw``.

    Returns ``(u_tilde, e)`` with ``u_tilde = prox_h(drift, 1)`` for the
    drift ``u_raw - grad_H(u_raw) - eta (u_raw - u_prev)`` and
    ``e = (1 - eta)(u_tilde - u_raw) + grad_H(u_raw) - grad_H(u_tilde)``.
    ``e`` is the negative of the first-order residual
    ``s + grad_H(u_tilde) + eta (u_tilde - u_prev)`` with ``s`` the
    subgradient of ``h`` at ``u_tilde`` certified by the prox.
    """
    if not eta > 0:
        raise ConfigError('eta must be positive, got %r' % (eta,))
    grad_raw = _check_finite(grad_H_u(u_raw, v_other), 'grad_H')
    drift = u_raw - grad_raw - eta * (u_raw - u_prev)
    u_tilde = _check_finite(prox_h(drift, 1.0), 'prox')
    grad_tilde = _check_finite(grad_H_u(u_tilde, v_other), 'grad_H')
    e = (1.0 - eta) * (u_tilde - u_raw) + grad_raw - grad_tilde
    return u_tilde, e


def accept_block(u_prev, v_other, prox_h, grad_H_u, eta, c_u, inner,
                 max_inner, abs_error_floor=1e-12, keep_last=False):
    """
    Run ``inner`` on ``min h(u) + H(u, v_other) + eta/2 ||u - u_prev||^2``
    until a prox-corrected candidate passes the inexactness criterion.

    When the budget runs out the result is flagged ``capped``. It holds the
    prox-corrected candidate with the smallest ratio
    ``||e|| / max(||delta||, floor)``, or with ``keep_last`` the last inner
    iterate itself, which is ``monotone`` when the solver never increases
    the subproblem.
    """
    if not eta > 2 * c_u:
        raise ConfigError('eta=%r must exceed 2*C=%r' % (eta, 2 * c_u))
    floor = abs_error_floor * (1.0 + float(np.linalg.norm(u_prev)))
    limit = max_inner
    if getattr(inner, 'max_steps', None):
        limit = min(limit, inner.max_steps)

    inner.reset(u_prev, v_other, eta)
    best = None
    best_ratio = np.inf
    e_norm = np.inf
    u_raw = u_prev
    for i in range(1, limit + 1):
        u_raw = inner.step()
        _check_finite(u_raw, 'inner:%s' % inner.name)
        u_tilde, e = evaluate_inexactness(u_raw, u_prev, v_other, prox_h,
                                          grad_H_u, eta)
        e_norm = float(np.linalg.norm(e))
        delta = float(np.linalg.norm(u_tilde - u_prev))
        if e_norm <= c_u * delta + floor:
            return BlockUpdate(u_tilde, i, e_norm, delta, floor)
        ratio = e_norm / max(delta, floor, MACHINE_FLOOR)
        if ratio < best_ratio:
            best_ratio = ratio
            best = BlockUpdate(u_tilde, i, e_norm, delta, floor, capped=True,
                               monotone=False)

    logger.warning('%s: criterion not met within %d inner steps '
                   '(best ||e||/||delta|| = %.3g)', inner.name, limit,
                   best_ratio)
    if keep_last:
        return BlockUpdate(u_raw, limit, e_norm,
                           float(np.linalg.norm(u_raw - u_prev)), floor,
                           capped=True,
                           monotone=getattr(inner, 'monotone', False))
    best.inner_count = limit
    return best


def _ratio(num, den):
    if den <= MACHINE_FLOOR:
        return 0.0 if num == 0 else np.inf
    return num / den


def check_stop(previous, current, mode, tol):
    """
    Outer stopping rule on two consecutive `OuterState` values.

    ``synthetic``: the largest relative change among y, x and Psi is below
    ``tol``. ``real``: the relative change of y (the dictionary) alone is.
    """
    dy_rel = _ratio(float(np.linalg.norm(current.y - previous.y)),
                    float(np.linalg.norm(previous.y)))
    if mode == 'real':
        return dy_rel < tol
    if mode != 'synthetic':
        raise ConfigError('unknown stop mode %r' % (mode,))
    dx_rel = _ratio(float(np.linalg.norm(current.x - previous.x)),
                    float(np.linalg.norm(previous.x)))
    dpsi_rel = _ratio(abs(current.psi - previous.psi), abs(previous.psi))
    return max(dy_rel, dx_rel, dpsi_rel) < tol


def solve_alternating(problem, config, update_x, update_y, init,
                      variant='ipad', callback=None):
    """
    Outer loop shared by IPAD and the baselines.

    ``update_x(x_prev, y, eta, t)`` and ``update_y(y_prev, x, eta, t)``
    return a `BlockUpdate`; the loop owns records, stop rules and the
    stall policy.
    """
    x = np.array(init.x, dtype=float)
    y = np.array(init.y, dtype=float)
    shapes = problem.block_shapes()
    if shapes is not None:
        x_shape, y_shape = (tuple(s) for s in shapes)
        if (x.shape, y.shape) != (x_shape, y_shape):
            raise ShapeError('initial point has shapes %r and %r, expected '
                             '%r and %r' % (x.shape, y.shape, x_shape,
                                             y_shape))
    psi = psi0 = problem.objective(x, y)
    if not np.isfinite(psi):
        raise InfeasibleStartError('objective',
                                   'objective is not finite at the initial '
                                   'point (psi=%r)' % (psi,))

    trace = []
    lipschitz_max = 0.0
    termination = MAX_OUTER
    start = time.perf_counter()
    for t in range(1, config.max_outer + 1):
        bx = update_x(x, y, config.eta_x(t - 1), t)
        if bx.u.shape != x.shape:
            raise ShapeError('x block changed shape %r -> %r'
                             % (x.shape, bx.u.shape))
        by = update_y(y, bx.u, config.eta_y(t - 1), t)
        if by.u.shape != y.shape:
            raise ShapeError('y block changed shape %r -> %r'
                             % (y.shape, by.u.shape))
        x_new, y_new = bx.u, by.u
        psi_new = problem.objective(x_new, y_new)

        m = problem.lipschitz(x_new, y_new)
        if m is not None:
            lipschitz_max = max(lipschitz_max, m)
        elapsed = time.perf_counter() - start if config.record_time else 0.0
        record = IterationRecord(
            t=t, psi=float(psi_new),
            dx_norm=float(np.linalg.norm(x_new - x)),
            dy_norm=float(np.linalg.norm(y_new - y)),
            ex_norm=bx.e_norm, ey_norm=by.e_norm,
            inner_x=bx.inner_count, inner_y=by.inner_count,
            elapsed=elapsed,
            dx_rel=_ratio(float(np.linalg.norm(x_new - x)),
                          float(np.linalg.norm(x))),
            dy_rel=_ratio(float(np.linalg.norm(y_new - y)),
                          float(np.linalg.norm(y))),
            dpsi_rel=_ratio(abs(psi_new - psi), abs(psi)),
            floor_x=bx.floor, floor_y=by.floor,
            capped_x=bx.capped, capped_y=by.capped,
            monotone_x=bx.monotone, monotone_y=by.monotone,
            lipschitz=float('nan') if m is None else float(m))

        if not (np.isfinite(psi_new) and np.all(np.isfinite(x_new)) and
                np.all(np.isfinite(y_new))):
            raise NonFiniteError('objective',
                                 'non-finite iterate or objective at outer '
                                 'step %d' % t, record=record,
                                 trace=trace + [record])
        trace.append(record)
        logger.debug('t=%d psi=%.10g dx=%.3g dy=%.3g inner=(%d, %d)', t,
                     record.psi, record.dx_norm, record.dy_norm,
                     record.inner_x, record.inner_y)
        if callback is not None:
            callback(record)

        stop = check_stop(OuterState(x, y, psi),
                          OuterState(x_new, y_new, psi_new),
                          config.stop_mode, config.outer_tol)
        x, y, psi = x_new, y_new, psi_new
        if (bx.capped or by.capped) and config.stall_policy == 'stop':
            termination = STALLED
            break
        if stop:
            termination = CONVERGED
            break

    logger.info('%s finished: %s after %d outer steps, psi=%.10g', variant,
                termination, len(trace), psi)
    return SolveResult(final=BlockPoint(x, y), trace=trace,
                       termination=termination, initial_psi=float(psi0),
                       variant=variant, lipschitz_max=lipschitz_max)


def inexact_x_update(problem, config, inner):
    """
    ``update_x`` callable for `solve_alternating` running `accept_block`
    with ``inner`` on the x subproblem.
    """
    def update_x(x_prev, y, eta, t):
        return accept_block(x_prev, y, problem.prox_f, problem.grad_H_x,
                            eta, config.c_x, inner, config.max_inner,
                            config.abs_error_floor,
                            config.stall_policy == 'continue')
    return update_x


def inexact_y_update(problem, config, inner):
    def grad_y(u, v):
        return problem.grad_H_y(v, u)

    def update_y(y_prev, x, eta, t):
        return accept_block(y_prev, x, problem.prox_g, grad_y, eta,
                            config.c_y, inner, config.max_inner,
                            config.abs_error_floor,
                            config.stall_policy == 'continue')
    return update_y


def solve_ipad(problem, config, inner_x, inner_y, init, variant='ipad',
               callback=None):
    """
    Inexact proximal alternating direction method.

    ``inner_x`` and ``inner_y`` are `ipad.inner.InnerSolver` instances for
    the x and y subproblems.
    """
    return solve_alternating(problem, config,
                             inexact_x_update(problem, config, inner_x),
                             inexact_y_update(problem, config, inner_y),
                             init, variant=variant, callback=callback)


def exact_config(config):
    """
    Copy of ``config`` with zero error constants, used to derive descent
    constants for methods that solve their block steps exactly.
    """
    return replace(config, c_x=0.0, c_y=0.0)
