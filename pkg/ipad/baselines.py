"""
Variant presets for sparse dictionary learning and the reference outer
algorithms they are compared against.

Every variant runs through `solve_alternating`, so all of them share the
trace schema and the stop rules. Blocks updated by a plain prox-linear
step (PALM style) or by a closed-form rule record ``||e|| = 0`` and one
inner step.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from ipad.error import ConfigError, FactorizationError
from ipad.framework import (BlockUpdate, IpadConfig, inexact_x_update,
                            inexact_y_update, solve_alternating)
from ipad.inner import (AdmmConfig, AdmmDictionarySolver, PithConfig,
                        PithSolver, ProxLinearSolver)
from ipad.prox import project_unit_columns
from ipad.sdl import (as_nnp, code_lipschitz, dictionary_lipschitz,
                      grad_H_d, grad_H_w)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VariantPreset:
    """
    ``w_scheme`` is one of ``prox-linear`` or ``pith``; ``d_scheme`` one of
    ``prox-linear``, ``admm``, ``linear-system+project`` or
    ``columnwise-palm``. ``inexact`` marks IPAD variants, whose traces are
    subject to the criterion audit.
    """
    name: str
    w_scheme: str
    d_scheme: str
    pith_max_steps: Optional[int] = None
    stall_policy: str = 'stop'
    inexact: bool = False
    descent_audited: bool = True

    def make_config(self, **kwargs):
        kwargs.setdefault('stall_policy', self.stall_policy)
        return IpadConfig(**kwargs)


PRESETS = {
    'palm': VariantPreset('PALM', 'prox-linear', 'prox-linear'),
    'mpalm': VariantPreset('mPALM', 'prox-linear', 'columnwise-palm'),
    'inv': VariantPreset('INV', 'prox-linear', 'linear-system+project',
                         descent_audited=False),
    'ipad-pith': VariantPreset('IPAD-PITH', 'pith', 'prox-linear',
                               stall_policy='continue', inexact=True),
    'ipad-admm': VariantPreset('IPAD-ADMM', 'prox-linear', 'admm',
                               inexact=True),
    'ipad-p2a': VariantPreset('IPAD-P2A', 'pith', 'admm', pith_max_steps=2,
                              stall_policy='continue', inexact=True),
}


def get_preset(name):
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError('unknown variant %r, expected one of: %s'
                          % (name, ', '.join(PRESETS)))


def single_step_update(solver):
    """
    Block update taking exactly one step of ``solver`` from the previous
    iterate.
    """
    def update(u_prev, other, eta, t):
        solver.reset(u_prev, other, eta)
        u = solver.step()
        return BlockUpdate(u, 1, 0.0, float(np.linalg.norm(u - u_prev)),
                           0.0)
    return update


def palm_w_solver(inst):
    problem = as_nnp(inst)
    return ProxLinearSolver(problem.prox_f,
                            lambda W, D: grad_H_w(inst, D, W),
                            code_lipschitz, name='palm-w')


def palm_d_solver(inst):
    problem = as_nnp(inst)
    return ProxLinearSolver(problem.prox_g,
                            lambda D, W: grad_H_d(inst, D, W),
                            dictionary_lipschitz, name='palm-d')


def inv_d_update(inst):
    """
    Dictionary step of INV: solve ``D (W^T W + eta Id) = I W + eta D_prev``
    and project the columns onto the unit sphere.
    """
    def update(D_prev, W, eta, t):
        system = W.T @ W + eta * np.eye(W.shape[1])
        rhs = inst.data @ W + eta * D_prev
        try:
            factor = scipy.linalg.cho_factor(system)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise FactorizationError('cannot factorize INV system: %s' % e)
        D = project_unit_columns(scipy.linalg.cho_solve(factor, rhs.T).T)
        return BlockUpdate(D, 1, 0.0, float(np.linalg.norm(D - D_prev)), 0.0)
    return update


def columnwise_lipschitz(W):
    return np.sum(W * W, axis=0)


def mpalm_d_update(inst):
    """
    Dictionary step of mPALM: one prox-linear step per atom in ascending
    column order, weight ``||w_i||^2 + eta``, each seeing the atoms
    already updated in this sweep.
    """
    def update(D_prev, W, eta, t):
        D = D_prev.copy()
        residual = D @ W.T - inst.data
        weights = columnwise_lipschitz(W) + eta
        for i in range(D.shape[1]):
            w = W[:, i]
            grad = residual @ w
            old = D[:, i].copy()
            D[:, i] = project_unit_columns(
                (old - grad / weights[i])[:, np.newaxis])[:, 0]
            residual += np.outer(D[:, i] - old, w)
        return BlockUpdate(D, 1, 0.0, float(np.linalg.norm(D - D_prev)), 0.0)
    return update


def build_updates(inst, preset, config, pith_config=None, admm_config=None):
    """
    ``(update_x, update_y)`` callables for `solve_alternating` implementing
    ``preset`` on ``inst``.
    """
    problem = as_nnp(inst)
    if preset.w_scheme == 'pith':
        pith_config = pith_config or PithConfig()
        if preset.pith_max_steps is not None:
            pith_config = PithConfig(step_scale=pith_config.step_scale,
                                     max_steps=preset.pith_max_steps)
        update_x = inexact_x_update(problem, config,
                                    PithSolver(inst, pith_config))
    elif preset.w_scheme == 'prox-linear':
        update_x = single_step_update(palm_w_solver(inst))
    else:
        raise ConfigError('unknown W scheme %r' % (preset.w_scheme,))

    if preset.d_scheme == 'admm':
        update_y = inexact_y_update(
            problem, config,
            AdmmDictionarySolver(inst, admm_config or AdmmConfig()))
    elif preset.d_scheme == 'prox-linear':
        update_y = single_step_update(palm_d_solver(inst))
    elif preset.d_scheme == 'linear-system+project':
        update_y = inv_d_update(inst)
    elif preset.d_scheme == 'columnwise-palm':
        update_y = mpalm_d_update(inst)
    else:
        raise ConfigError('unknown D scheme %r' % (preset.d_scheme,))
    return update_x, update_y


def run_variant(name, inst, config, init, pith_config=None,
                admm_config=None, callback=None):
    """
    Runs the preset called ``name`` from ``init`` (a `BlockPoint` with
    ``x = W`` and ``y = D``).
    """
    preset = get_preset(name)
    inst.check_shapes(init.y, init.x)
    update_x, update_y = build_updates(inst, preset, config, pith_config,
                                       admm_config)
    logger.info('running %s on n=%d m=%d p=%d', preset.name, inst.n, inst.m,
                inst.p)
    return solve_alternating(as_nnp(inst), config, update_x, update_y, init,
                             variant=preset.name, callback=callback)


def palm_solve(inst, config, init):
    return run_variant('palm', inst, config, init)


def inv_solve(inst, config, init):
    return run_variant('inv', inst, config, init)


def mpalm_solve(inst, config, init):
    return run_variant('mpalm', inst, config, init)
