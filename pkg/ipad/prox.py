"""
Proximal and projection primitives shared by the inner solvers.
"""
import logging

import numpy as np

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
UNIT_TOL = 4 * EPS
SECOND_START_SEED = 0


def prox_hard_threshold(v, tau, lam, bound=None):
    """
    Proximal mapping of ``lam * ||.||_0`` plus the box indicator
    ``|w| <= bound`` with weight ``tau``.

    Every entry has two candidates, zero and ``clip(v, -bound, bound)``;
    the cheaper one wins and ties go to zero.
    """
    if tau <= 0:
        raise ValueError('prox weight must be positive, got %r' % (tau,))
    v = np.asarray(v, dtype=float)
    if bound is None:
        candidate = v
    else:
        candidate = np.clip(v, -bound, bound)
    keep_cost = lam + 0.5 * tau * (candidate - v) ** 2
    zero_cost = 0.5 * tau * v ** 2
    return np.where(keep_cost < zero_cost, candidate, 0.0)


def project_unit_columns(D):
    """
    Nearest matrix with unit Euclidean column norms.

    Zero columns become the first canonical basis vector. Columns whose
    norm is already within a few ulps of one are returned untouched, so
    the projection is idempotent bit for bit.
    """
    D = np.array(D, dtype=float)
    if D.ndim != 2:
        raise ValueError('expected a matrix, got shape %r' % (D.shape,))
    norms = np.linalg.norm(D, axis=0)
    zero = norms == 0
    rescale = ~zero & (np.abs(norms - 1.0) > UNIT_TOL)
    D[:, rescale] /= norms[rescale]
    if zero.any():
        D[:, zero] = 0.0
        D[0, zero] = 1.0
    return D


def _power_iteration(gram, x, tol, max_iter):
    lam = 0.0
    for _ in range(max_iter):
        y = gram @ x
        y_norm = np.linalg.norm(y)
        if y_norm == 0:
            return 0.0, True
        lam_new = float(x @ y)
        x = y / y_norm
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new, True
        lam = lam_new
    return lam, False


def spectral_norm(A, tol=1e-10, max_iter=10000, full_output=False):
    """
    Largest singular value of ``A`` by power iteration.

    The iteration runs on the smaller of the two Gram matrices and stops
    once the relative change of the Rayleigh quotient drops under ``tol``.
    It starts from the normalized all-ones vector and again from a fixed
    pseudo-random vector, keeping the larger estimate: the all-ones vector
    can lie in a low eigenspace (zero-mean atoms, ``[[1, -1], [-1, 1]]``).
    When ``full_output`` is true a ``(sigma, converged)`` pair is returned.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise ValueError('spectral norm of an empty matrix')
    if A.ndim == 1:
        A = A[:, np.newaxis]
    if A.shape[1] <= A.shape[0]:
        gram = A.T @ A
    else:
        gram = A @ A.T

    k = gram.shape[0]
    second = np.random.default_rng(SECOND_START_SEED).standard_normal(k)
    starts = (np.ones(k) / np.sqrt(k), second / np.linalg.norm(second))
    lam = 0.0
    converged = True
    for x in starts:
        lam_x, ok = _power_iteration(gram, x, tol, max_iter)
        lam = max(lam, lam_x)
        converged = converged and ok
    if not converged:
        logger.warning('power iteration stopped after %d steps without '
                       'reaching tol=%g', max_iter, tol)

    sigma = float(np.sqrt(max(lam, 0.0)))
    if full_output:
        return sigma, converged
    return sigma
