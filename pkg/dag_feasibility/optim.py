# -*- coding: utf-8 -*-
"""Box-constrained local minimization with multi-start."""
import logging
from collections import namedtuple

import numpy as np
from scipy.optimize import minimize
from validator_collection import validators

from dag_feasibility import errors
from dag_feasibility.samplers import sobol, scale_to_box

logger = logging.getLogger(__name__)

LBFGS_MEMORY = 10

NlpResult = namedtuple('NlpResult', ['x_star', 'f_star', 'converged', 'iterations'])
NlpResult.__doc__ = """Outcome of a local solve: minimizer inside the box, its objective value,
whether the projected-gradient test was met, and the iterations used."""


def _evaluate(objective_with_gradient, x):
    f, g = objective_with_gradient(x)
    return float(f), np.asarray(g, dtype = float).reshape(-1)


def box_minimize(objective_with_gradient, box, x0, tol = 1e-8, max_iter = 200):
    """Minimize a smooth objective over ``box`` with L-BFGS-B.

    Iterates never leave the box (the algorithm projects every step), the memory is
    ``10`` correction pairs, and convergence is declared when the projected gradient
    ``||P(x - grad f) - x||_inf <= tol``.

    :param objective_with_gradient: Callable ``x -> (f(x), grad f(x))``.

    :param box: Feasible box.
    :type box: :class:`Box`

    :param x0: Starting point inside ``box``.

    :param tol: Projected-gradient tolerance. Defaults to ``1e-8``.
    :type tol: :class:`float <python:float>`

    :param max_iter: Iteration cap. Defaults to ``200``.
    :type max_iter: :class:`int <python:int>`

    :returns: ``converged = False`` on iteration exhaustion (not an error).
    :rtype: :class:`NlpResult`

    :raises DimensionMismatchError: if ``x0`` does not match the box
    """
    tol = validators.float(tol, minimum = 0)
    max_iter = validators.integer(max_iter, minimum = 1, coerce_value = True)
    x0 = np.asarray(x0, dtype = float).reshape(-1)
    if x0.size != box.dim:
        raise errors.DimensionMismatchError(f'x0 has dimension {x0.size}, '
                                            f'box has dimension {box.dim}')
    x0 = box.clip(x0)

    if box.dim == 0:
        f, _ = _evaluate(objective_with_gradient, x0)
        return NlpResult(x0, f, True, 0)

    result = minimize(lambda x: _evaluate(objective_with_gradient, x),
                      x0,
                      jac = True,
                      method = 'L-BFGS-B',
                      bounds = list(zip(box.lo, box.hi)),
                      options = {'maxcor': LBFGS_MEMORY,
                                 'gtol': tol,
                                 'ftol': np.finfo(float).eps,
                                 'maxiter': max_iter})

    x_star = box.clip(result.x)
    f_star, gradient = _evaluate(objective_with_gradient, x_star)
    projected = float(np.max(np.abs(box.clip(x_star - gradient) - x_star)))
    # a line search may give up at a point that already passes the test
    converged = bool(result.success) or projected <= tol
    if not converged:
        logger.debug('L-BFGS-B stopped after %d iterations: %s', result.nit, result.message)

    return NlpResult(x_star, f_star, converged, int(result.nit))


def multistart_minimize(objective_with_gradient,
                        box,
                        n_starts = 10,
                        seed = 0,
                        tol = 1e-8,
                        max_iter = 200,
                        stop_when = None):
    """Run :func:`box_minimize` from ``n_starts`` scrambled Sobol points of ``box``.

    The result with the smallest ``f_star`` wins; ties go to the lowest start index. If
    ``stop_when`` is given, the search stops at the first result for which it returns
    ``True`` and that result is returned.

    :rtype: :class:`NlpResult`
    """
    n_starts = validators.integer(n_starts, minimum = 1, coerce_value = True)
    if box.dim == 0:
        return box_minimize(objective_with_gradient, box, np.zeros(0), tol, max_iter)

    starts = scale_to_box(sobol(box.dim, n_starts, seed = seed), box)
    best = None
    for start in starts:
        result = box_minimize(objective_with_gradient, box, start, tol, max_iter)
        if stop_when is not None and stop_when(result):
            return result
        if best is None or result.f_star < best.f_star:
            best = result

    return best


def penalty_objective(base_objective, equality_residuals, weight = 1e3):
    """Fold equality constraints ``r(x) = 0`` into an objective by quadratic penalty.

    :param base_objective: Callable ``x -> (f, grad f)``.

    :param equality_residuals: Callable ``x -> (r, J)`` with ``J = dr/dx``.

    :param weight: Penalty weight, ``> 0``. Defaults to ``1e3``.
    :type weight: :class:`float <python:float>`

    :returns: Callable ``x -> (f + weight * ||r||^2, grad f + 2 * weight * J^T r)``.
    """
    weight = validators.float(weight)
    if weight <= 0:
        raise ValueError(f'weight must be positive. Was: {weight}')

    def objective(x):
        f, g = base_objective(x)
        r, jacobian = equality_residuals(x)
        r = np.asarray(r, dtype = float).reshape(-1)
        jacobian = np.asarray(jacobian, dtype = float).reshape(r.size, -1)
        return (float(f) + weight * float(r @ r),
                np.asarray(g, dtype = float).reshape(-1) + 2.0 * weight * (jacobian.T @ r))

    return objective
