# -*- coding: utf-8 -*-
"""Built-in case studies, a brute-force feasibility oracle, and the approximator SIP.

Cases are registered by name in :data:`CASES`:

* ``linear5``: five affine nodes on the topology ``0, 1 -> 2 -> 3, 4``.
* ``linear5-narrow``: the same graph with constant terms that shrink the joint feasible
  set.
* ``reactors``: two batch reactors in series with calibrated kinetics.
* ``reactors-published``: the same network with the kinetics and bounds as published,
  which admit no jointly feasible point.
* ``funcapprox``: a six-node basis decomposition of a nonconvex function approximator
  with coupling parameters ``(z, eps)``.
"""
import itertools
import logging
import math
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np
from validator_collection import validators, checkers

from dag_feasibility import errors
from dag_feasibility.config import NlpConfig
from dag_feasibility.domains import Box, SampleSet, FEASIBLE, INFEASIBLE, box_product
from dag_feasibility.graph import NodeSpec, build_graph
from dag_feasibility.optim import multistart_minimize
from dag_feasibility.reconstruct import composite_feasibility
from dag_feasibility.samplers import derive_seed, sobol, scale_to_box
from dag_feasibility.surrogates import svm_decision, svm_gradient

logger = logging.getLogger(__name__)

GAS_CONSTANT = 8.314e-3
ORACLE_MAX_DIM = 14
LINEAR_OFFSET = 0.0
NARROW_LINEAR_OFFSET = 0.3

_RK4_CACHE_SIZE = 2**16


# -- affine graphs -------------------------------------------------------------------------

def _matrix(value, rows, cols, name):
    if value is None:
        return np.zeros((rows, cols))
    matrix = np.asarray(value, dtype = float)
    if matrix.size == 0:
        return np.zeros((rows, cols))
    matrix = matrix.reshape(rows, -1)
    if matrix.shape[1] != cols:
        raise errors.DimensionMismatchError(f'{name} must have {cols} columns. '
                                            f'Was: {matrix.shape[1]}')
    return matrix


def _form_rows(form):
    form = validators.dict(form, allow_empty = False)
    for key in ('A', 'B'):
        if form.get(key) is not None and np.size(form[key]):
            return np.atleast_2d(np.asarray(form[key], dtype = float)).shape[0]
    rows = np.asarray(form.get('c', []), dtype = float).size
    if rows == 0:
        raise ValueError(f'affine form declares no rows. Was: {form}')
    return rows


def _affine_form(form, param_dim, input_dim):
    """Return ``(rows, fn)`` for ``fn(v, u) = A v + B u + c``."""
    rows = _form_rows(form)

    a = _matrix(form.get('A'), rows, param_dim, 'A')
    b = _matrix(form.get('B'), rows, input_dim, 'B')
    c = np.zeros(rows) if form.get('c') is None else \
        np.asarray(form['c'], dtype = float).reshape(rows)

    def fn(v, u):
        return a @ v + b @ u + c

    return rows, fn


def affine_graph(declaration):
    """Build a graph whose constraint and constituent functions are affine forms.

    The declaration is a mapping (typically the ``graph`` section of a run configuration)::

        name: my-graph
        nodes:
          - id: 0
            lo: [-1, -1]
            hi: [1, 1]
            constraint: {A: [[1, -1]], c: [0.3]}      # G = A v + B u + c
            outputs:
              2: {A: [[1, -1]], c: [0.3]}            # y_0^2 = A v + B u + c

    Edges are implied by the ``outputs`` sections; their payload length is the number of
    rows of the form. ``B`` acts on the node's inputs, concatenated in ascending source
    order. Omitted ``A``, ``B`` or ``c`` are zero. A node without ``constraint`` has no
    local constraint.

    :rtype: :class:`GraphSpec`
    """
    declaration = validators.dict(declaration, allow_empty = False)
    nodes = validators.iterable(declaration.get('nodes'), allow_empty = False)

    edges = []
    for node in nodes:
        for target, form in (node.get('outputs') or {}).items():
            edges.append((int(node['id']), int(target), _form_rows(form)))

    input_dims = {int(node['id']): 0 for node in nodes}
    for source, target, dim in edges:
        if target not in input_dims:
            raise errors.GraphStructureError(f'edge ({source}, {target}) references a '
                                             'missing node')
        input_dims[target] += dim

    specs = []
    for node in nodes:
        node_id = int(node['id'])
        param_box = Box(node.get('lo', []), node.get('hi', []))
        input_dim = input_dims[node_id]
        if node.get('constraint'):
            _, constraint_fn = _affine_form(node['constraint'], param_box.dim, input_dim)
        else:
            def constraint_fn(v, u):
                return np.zeros(0)
        outputs = {int(target): _affine_form(form, param_box.dim, input_dim)[1]
                   for target, form in (node.get('outputs') or {}).items()}
        specs.append(NodeSpec(node_id,
                              param_box,
                              constraint_fn,
                              outputs,
                              name = node.get('name'),
                              cheap = node.get('cheap', False),
                              input_dim = input_dim))

    return build_graph(specs, edges, name = declaration.get('name') or 'affine')


def linear_example_declaration(offset = LINEAR_OFFSET, name = None):
    """Return the :func:`affine_graph` declaration of the five-node linear example."""
    offset = validators.float(offset)
    unit = {'lo': [-1.0, -1.0], 'hi': [1.0, 1.0]}
    node0 = {'A': [[1.0, -1.0]], 'c': [offset]}
    node1 = {'A': [[0.5, 0.5]], 'c': [offset]}
    node2_to3 = {'A': [[1.0, 0.5]], 'B': [[0.5, 0.5]]}
    node2_to4 = {'A': [[-0.5, 1.0]], 'B': [[0.5, 0.5]]}
    return {
        'name': name or 'linear5',
        'nodes': [
            dict(unit, id = 0, constraint = node0, outputs = {2: node0}),
            dict(unit, id = 1, constraint = node1, outputs = {2: node1}),
            dict(unit,
                 id = 2,
                 constraint = {'A': node2_to3['A'] + node2_to4['A'],
                               'B': node2_to3['B'] + node2_to4['B']},
                 outputs = {3: node2_to3, 4: node2_to4}),
            dict(unit, id = 3, constraint = {'A': [[1.0, 1.0]], 'B': [[1.0]], 'c': [offset]}),
            dict(unit, id = 4, constraint = {'A': [[1.0, -0.5]], 'B': [[1.0]], 'c': [offset]}),
        ],
    }


def linear_example_graph(offset = LINEAR_OFFSET, name = None):
    """Return the five-node affine graph with edges ``(0,2), (1,2), (2,3), (2,4)``.

    Every node has ``v_i`` in ``[-1, 1]^2`` and constrains its full affine output to be
    ``<= 0``. By default every constraint passes through the origin, so ``v = 0`` is
    boundary-feasible and node 0 alone keeps half of its box. A positive ``offset`` is
    added to the constant terms of nodes ``0, 1, 3, 4``;
    :data:`NARROW_LINEAR_OFFSET` shrinks the joint feasible fraction of ``[-1, 1]^10`` to
    about 2%.

    :rtype: :class:`GraphSpec`
    """
    return affine_graph(linear_example_declaration(offset, name))



# -- reactor network -----------------------------------------------------------------------

def arrhenius(k0, E, T):
    """Return ``k0 * exp(-E / (R * T))`` with ``R = 8.314e-3`` kJ/(mol K).

    :raises NonpositiveTemperatureError: if ``T <= 0``
    """
    T = float(T)
    if not T > 0:
        raise errors.NonpositiveTemperatureError(f'temperature must be positive. Was: {T}')
    return float(k0) * math.exp(-float(E) / (GAS_CONSTANT * T))


def rk4_integrate(rhs, x0, t_end, n_steps = 200):
    """Integrate ``x' = rhs(t, x)`` from ``x0`` over ``[0, t_end]`` with classical RK4.

    :param rhs: Callable ``(t, x) -> x'``.
    :param x0: Initial state.
    :param t_end: End time, ``>= 0``.
    :param n_steps: Fixed number of equal steps. Defaults to ``200``.

    :returns: The state at ``t_end``.
    :rtype: :class:`numpy.ndarray`

    :raises NonFiniteStateError: if any component becomes NaN or infinite
    """
    n_steps = validators.integer(n_steps, minimum = 1, coerce_value = True)
    t_end = validators.float(t_end, minimum = 0)
    x = np.array(x0, dtype = float).reshape(-1)
    h = t_end / n_steps
    t = 0.0
    for step in range(n_steps):
        k1 = np.asarray(rhs(t, x), dtype = float)
        k2 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k1), dtype = float)
        k3 = np.asarray(rhs(t + 0.5 * h, x + 0.5 * h * k2), dtype = float)
        k4 = np.asarray(rhs(t + h, x + h * k3), dtype = float)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = (step + 1) * h
        if not np.all(np.isfinite(x)):
            raise errors.NonFiniteStateError(f'state became non-finite at t={t:g}: {x}')
    return x


def _reaction_rhs(k1, k2):
    def rhs(t, c):
        rate1 = k1 * c[0] * c[0]
        rate2 = k2 * c[1]
        return np.array([-2.0 * rate1, rate1 - rate2, rate2])
    return rhs


def _stable_steps(n_steps, t_end, k1, k2, c_a0):
    """RK4 step count keeping ``h * lambda <= 2`` for the local stiffness ``lambda``."""
    stiffness = max(k2, 4.0 * k1 * c_a0)
    return max(int(n_steps), int(math.ceil(t_end * stiffness / 2.0)))


@lru_cache(maxsize = _RK4_CACHE_SIZE)
def _batch_endpoint(t_end, k1, k2, c_a0, c_b0, n_steps):
    steps = _stable_steps(n_steps, t_end, k1, k2, c_a0)
    return tuple(rk4_integrate(_reaction_rhs(k1, k2), (c_a0, c_b0, 0.0), t_end, steps))


class ReactorParams(object):
    """Kinetics, initial state and purity bounds of the two-reactor network.

    ``k0`` and ``E`` are ``2 x 2``: row ``j`` holds reactions ``A -> B`` and ``B -> C`` of
    reactor ``j``. Defaults to :meth:`published`.
    """

    def __init__(self,
                 k0 = None,
                 E = None,
                 c0 = (2.0, 0.0, 0.0),
                 bound_c = 0.240,
                 bound_b = 0.825,
                 tau_box = (300.0, 900.0),
                 temperature_box = (300.0, 700.0),
                 n_steps = 200,
                 name = 'published'):
        k0 = np.asarray(k0 if k0 is not None else [[1.66e-4, 0.50], [9.66e-3, 5.03]],
                        dtype = float).reshape(2, 2)
        E = np.asarray(E if E is not None else [[1.50, 5.00], [2.50, 5.00]],
                       dtype = float).reshape(2, 2)
        if np.any(k0 <= 0) or np.any(E < 0):
            raise ValueError('pre-exponential factors must be positive and activation '
                             'energies nonnegative')
        c0 = np.asarray(c0, dtype = float).reshape(3)
        if np.any(c0 < 0):
            raise ValueError(f'initial concentrations must be nonnegative. Was: {c0}')

        self._k0 = tuple(map(tuple, k0))
        self._E = tuple(map(tuple, E))
        self._c0 = tuple(c0)
        self._bound_c = validators.float(bound_c, minimum = 0, maximum = 1)
        self._bound_b = validators.float(bound_b, minimum = 0, maximum = 1)
        self._tau_box = Box([tau_box[0]], [tau_box[1]])
        self._temperature_box = Box([temperature_box[0]], [temperature_box[1]])
        if self._temperature_box.lo[0] <= 0:
            raise errors.NonpositiveTemperatureError('temperatures must be positive')
        self._n_steps = validators.integer(n_steps, minimum = 1, coerce_value = True)
        self._name = validators.string(name)

    @classmethod
    def published(cls):
        """Kinetics and purity bounds exactly as published."""
        return cls()

    @classmethod
    def calibrated(cls):
        """Kinetics with the two reaction roles of each reactor exchanged, and bounds
        ``c_C / sum <= 0.06`` (reactor 1) and ``c_B / sum >= 0.28`` (reactor 2).

        The published constants admit no jointly feasible operating point at the published
        bounds; this preset keeps the same constants but yields a thin, nonempty joint
        feasible region (about 0.3% of the parameter box).
        """
        return cls(k0 = [[0.50, 1.66e-4], [5.03, 9.66e-3]],
                   E = [[5.00, 1.50], [5.00, 2.50]],
                   bound_c = 0.06,
                   bound_b = 0.28,
                   name = 'calibrated')

    @property
    def k0(self):
        """Pre-exponential factors, m^3 kmol^-1 min^-1.

        :rtype: :class:`numpy.ndarray`
        """
        return np.array(self._k0)

    @property
    def E(self):
        """Activation energies, kJ mol^-1.

        :rtype: :class:`numpy.ndarray`
        """
        return np.array(self._E)

    @property
    def R(self):
        return GAS_CONSTANT

    @property
    def c0(self):
        """Initial concentrations of reactor 1, kmol m^-3.

        :rtype: :class:`numpy.ndarray`
        """
        return np.array(self._c0)

    @property
    def bound_c(self):
        """Upper bound on the molar fraction of C leaving reactor 1."""
        return self._bound_c

    @property
    def bound_b(self):
        """Lower bound on the molar fraction of B leaving reactor 2."""
        return self._bound_b

    @property
    def param_box(self):
        """``(tau, T)`` box shared by both reactors.

        :rtype: :class:`Box`
        """
        return box_product([self._tau_box, self._temperature_box])

    @property
    def n_steps(self):
        return self._n_steps

    @property
    def name(self):
        return self._name

    def rates(self, reactor, T):
        """Return ``(k1, k2)`` of ``reactor`` (0 or 1) at temperature ``T``."""
        return (arrhenius(self._k0[reactor][0], self._E[reactor][0], T),
                arrhenius(self._k0[reactor][1], self._E[reactor][1], T))

    def endpoint(self, reactor, tau, T, c_a0, c_b0):
        """Concentrations ``(c_A, c_B, c_C)`` after a batch of length ``tau`` at ``T``,
        starting from ``(c_a0, c_b0, 0)``.

        :rtype: :class:`numpy.ndarray`
        """
        k1, k2 = self.rates(reactor, T)
        return np.array(_batch_endpoint(float(tau), k1, k2, float(c_a0), float(c_b0),
                                        self._n_steps))

    def to_dict(self):
        return {
            'name': self._name,
            'k0': [list(row) for row in self._k0],
            'E': [list(row) for row in self._E],
            'c0': list(self._c0),
            'bound_c': self._bound_c,
            'bound_b': self._bound_b,
            'tau_box': [float(self._tau_box.lo[0]), float(self._tau_box.hi[0])],
            'temperature_box': [float(self._temperature_box.lo[0]),
                                float(self._temperature_box.hi[0])],
            'n_steps': self._n_steps,
        }

    @classmethod
    def from_dict(cls, as_dict):
        as_dict = validators.dict(as_dict, allow_empty = True) or {}
        return cls(**as_dict)

    def __repr__(self):
        return f'ReactorParams(name={self._name!r})'


def _fraction(concentrations, index):
    total = float(np.sum(concentrations))
    return float(concentrations[index]) / total if total > 0 else 0.0


def reactor_graph(params = None):
    """Return the two-reactor chain.

    Node 0 runs reactor 1 from ``c0`` for ``v_0 = (tau_1, T_1)`` and requires
    ``c_C / (c_A + c_B + c_C) <= bound_c``; C is then separated off and ``(c_A, c_B)`` is
    passed to node 1. Node 1 runs reactor 2 from ``(c_A, c_B, 0)`` for
    ``v_1 = (tau_2, T_2)`` and requires ``c_B / (c_A + c_B + c_C) >= bound_b``.

    :param params: Kinetics and bounds. Defaults to :meth:`ReactorParams.published`.
    :type params: :class:`ReactorParams`

    :rtype: :class:`GraphSpec`
    """
    params = params if params is not None else ReactorParams.published()
    c0 = params.c0

    def reactor1(v):
        return params.endpoint(0, v[0], v[1], c0[0], c0[1])

    def reactor1_constraint(v, u):
        return np.array([_fraction(reactor1(v), 2) - params.bound_c])

    def reactor1_outlet(v, u):
        return reactor1(v)[:2]

    def reactor2_constraint(v, u):
        outlet = params.endpoint(1, v[0], v[1], u[0], u[1])
        return np.array([params.bound_b - _fraction(outlet, 1)])

    nodes = [
        NodeSpec(0, params.param_box, reactor1_constraint, {1: reactor1_outlet},
                 name = 'reactor1'),
        NodeSpec(1, params.param_box, reactor2_constraint, name = 'reactor2', input_dim = 2),
    ]
    name = 'reactors' if params.name == 'calibrated' else f'reactors-{params.name}'
    return build_graph(nodes, [(0, 1, 2)], name = name)


# -- function approximation ----------------------------------------------------------------

def nonconvex_target(z):
    """Return ``sum(z_m^3 - z_m^2) - sum_{m<n} z_m z_n``.

    :rtype: :class:`float <python:float>`
    """
    z = np.asarray(z, dtype = float).reshape(-1)
    cross = (z.sum() ** 2 - float(z @ z)) / 2.0
    return float(np.sum(z ** 3 - z ** 2) - cross)


APPROXIMATOR_Z_BOX = Box([-0.5, 0.0], [1.0, 0.3])
APPROXIMATOR_EPS_BOX = Box([0.0], [0.25])


def approximator_graph():
    """Return the six-node basis decomposition of the approximator
    ``f(z; v) = z^T L L^T z + p^T z + sum z_m S_m log(z_m + 1) - sum T_m log(z_m + 1) + c``.

    Nodes 0-4 own ``c``, ``T``, ``S``, ``p`` and the lower-triangular ``L`` (entries
    ``L11, L21, L22``) and pass their basis term to node 5, which requires
    ``|sum of terms - nonconvex_target(z)| <= eps``. The coupling parameters are
    ``(z_1, z_2, eps)`` over ``[-0.5, 1] x [0, 0.3] x [0, 0.25]``.

    :rtype: :class:`GraphSpec`
    """
    def no_constraint(v, u, z):
        return np.zeros(0)

    def log_terms(z):
        return np.log1p(z[:2])

    def constant_term(v, u, z):
        return np.array([v[0]])

    def t_term(v, u, z):
        return np.array([-float(v @ log_terms(z))])

    def s_term(v, u, z):
        return np.array([float(np.sum(z[:2] * v * log_terms(z)))])

    def p_term(v, u, z):
        return np.array([float(v @ z[:2])])

    def l_term(v, u, z):
        lt_z = np.array([v[0] * z[0] + v[1] * z[1], v[2] * z[1]])
        return np.array([float(lt_z @ lt_z)])

    def mismatch(v, u, z):
        return np.array([abs(float(np.sum(u)) - nonconvex_target(z[:2])) - z[2]])

    nodes = [
        NodeSpec(0, Box([-1.0], [1.0]), no_constraint, {5: constant_term}, name = 'constant'),
        NodeSpec(1, Box.unit(2), no_constraint, {5: t_term}, name = 'log'),
        NodeSpec(2, Box.unit(2), no_constraint, {5: s_term}, name = 'zlog'),
        NodeSpec(3, Box([-1.0, -1.0], [1.0, 1.0]), no_constraint, {5: p_term},
                 name = 'linear'),
        NodeSpec(4, Box([-1.0] * 3, [1.0] * 3), no_constraint, {5: l_term},
                 name = 'quadratic'),
        NodeSpec(5, Box.empty(), mismatch, name = 'mismatch', input_dim = 5),
    ]
    edges = [(source, 5, 1) for source in range(5)]
    return build_graph(nodes,
                       edges,
                       coupling_box = box_product([APPROXIMATOR_Z_BOX, APPROXIMATOR_EPS_BOX]),
                       coupling_roles = [('z', 2), ('eps', 1)],
                       name = 'funcapprox')


# -- oracle ---------------------------------------------------------------------------------

def brute_force_oracle(graph, n_points, seed = None, workers = 1):
    """Label ``n_points`` Sobol points of the joint box by true joint feasibility.

    :param seed: Scrambling seed; the unscrambled sequence is used when omitted.
    :param workers: Threads evaluating points. Defaults to ``1``.

    :returns: Every evaluated point, labeled; ``n_evaluations`` counts the node
      evaluations spent.
    :rtype: :class:`SampleSet`

    :raises DimensionGuardError: if the joint dimension exceeds ``14``
    """
    n_points = validators.integer(n_points, minimum = 1, coerce_value = True)
    box = graph.joint_box()
    if box.dim > ORACLE_MAX_DIM:
        raise errors.DimensionGuardError(f'joint dimension {box.dim} exceeds the oracle '
                                         f'limit of {ORACLE_MAX_DIM}')
    points = scale_to_box(sobol(box.dim, n_points, seed = seed), box)
    n_v = box.dim - graph.coupling_dim

    def check(point):
        z = point[n_v:] if graph.is_coupled else None
        return composite_feasibility(graph, point[:n_v], z, short_circuit = False)

    workers = validators.integer(workers, minimum = 1, coerce_value = True)
    if workers == 1:
        results = [check(point) for point in points]
    else:
        with ThreadPoolExecutor(max_workers = workers) as pool:
            results = list(pool.map(check, points))

    labels = [FEASIBLE if feasible else INFEASIBLE for feasible, _ in results]
    spent = sum(n_evals for _, n_evals in results)
    logger.info('oracle: %d of %d points feasible on %s', labels.count(FEASIBLE), n_points,
                graph.name)

    return SampleSet(points, labels, max(spent, n_points), graph.joint_roles(),
                     metadata = {'oracle': True, 'seed': seed})


# -- semi-infinite program -----------------------------------------------------------------

class SipResult(namedtuple('SipResult', ['v_star', 'eps_star', 'discretization_points',
                                         'iterations', 'max_violation'])):
    """Solution of the approximator SIP: the parameters, the smallest certified error
    bound, the ``z`` points of the final discretization, the exchange iterations, and the
    largest classifier value found by the last inner search."""

    def to_dict(self):
        return {
            'v_star': np.asarray(self.v_star).tolist(),
            'eps_star': float(self.eps_star),
            'discretization_points': [np.asarray(z).tolist()
                                      for z in self.discretization_points],
            'iterations': int(self.iterations),
            'max_violation': float(self.max_violation),
        }


def _initial_grid(z_box, per_dim = 3):
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(z_box.lo, z_box.hi)]
    return [np.array(point) for point in itertools.product(*axes)]


def _master_objective(classifier, z_points, n_v, weight, fixed_eps = None):
    """``eps + weight * sum_z max(0, G(v, z, eps))^2`` over ``x = (v, eps)`` (or over
    ``v`` alone when ``fixed_eps`` is given)."""
    def objective(x):
        v = x[:n_v]
        eps = x[n_v] if fixed_eps is None else fixed_eps
        f = eps if fixed_eps is None else 0.0
        grad = np.zeros(x.size)
        if fixed_eps is None:
            grad[n_v] = 1.0
        for z in z_points:
            point = np.concatenate([v, z, [eps]])
            hinge = max(0.0, svm_decision(classifier, point))
            if hinge == 0.0:
                continue
            g = svm_gradient(classifier, point)
            f += weight * hinge * hinge
            grad[:n_v] += 2.0 * weight * hinge * g[:n_v]
            if fixed_eps is None:
                grad[n_v] += 2.0 * weight * hinge * g[-1]
        return f, grad
    return objective


def _worst_violation(classifier, v, eps, z_box, config, seed):
    n_v = v.size

    def objective(z):
        point = np.concatenate([v, z, [eps]])
        return -svm_decision(classifier, point), -svm_gradient(classifier, point)[n_v:-1]

    result = multistart_minimize(objective,
                                 z_box,
                                 n_starts = config.n_starts,
                                 seed = seed,
                                 tol = config.tol,
                                 max_iter = config.max_iter)
    return result.x_star, -result.f_star


def sip_solve(classifier,
              boxes,
              config = None,
              viol_tol = 1e-3,
              max_iterations = 25,
              seed = 0):
    """Find the smallest ``eps`` for which some ``v`` satisfies
    ``classifier(v, z, eps) <= 0`` for every ``z`` in the coupling box.

    Exchange scheme: start from a ``3 x 3`` grid of ``z``; solve the master problem
    ``min eps + w * sum max(0, G)^2`` over ``(v, eps)`` on the current points; find the
    most violated ``z`` by a multi-start search; add it if its violation exceeds
    ``viol_tol``; stop when none does or after ``max_iterations`` rounds.

    :param classifier: Classifier over ``[v | z | eps]``.
    :type classifier: :class:`SvmClassifier`

    :param boxes: ``(v_box, z_box, eps_box)``.

    :param config: Solver settings (starts, tolerances, penalty weight).
    :type config: :class:`NlpConfig`

    :rtype: :class:`SipResult`

    :raises NoFeasibleApproximatorError: if the master problem stays infeasible with
      ``eps`` at its upper bound
    """
    v_box, z_box, eps_box = boxes
    if eps_box.dim != 1:
        raise errors.DimensionMismatchError(f'eps_box must be 1-dimensional. '
                                            f'Was: {eps_box.dim}')
    if classifier.dim != v_box.dim + z_box.dim + 1:
        raise errors.DimensionMismatchError(f'classifier takes {classifier.dim} inputs, '
                                            f'boxes describe {v_box.dim + z_box.dim + 1}')
    config = config if config is not None else NlpConfig()
    viol_tol = validators.float(viol_tol, minimum = 0)
    max_iterations = validators.integer(max_iterations, minimum = 1, coerce_value = True)
    n_v = v_box.dim
    eps_hi = float(eps_box.hi[0])

    z_points = _initial_grid(z_box)
    for iteration in range(1, max_iterations + 1):
        master_seed = derive_seed(seed, 'sip-master', iteration)
        result = multistart_minimize(
            _master_objective(classifier, z_points, n_v, config.penalty_weight),
            box_product([v_box, eps_box]),
            n_starts = config.n_starts,
            seed = master_seed,
            tol = config.tol,
            max_iter = config.max_iter,
        )
        v_star, eps_star = result.x_star[:n_v], float(result.x_star[n_v])
        violation = max(svm_decision(classifier, np.concatenate([v_star, z, [eps_star]]))
                        for z in z_points)

        if violation > viol_tol:
            logger.info('SIP master infeasible at eps=%g (violation %g); retrying with '
                        'eps at its bound', eps_star, violation)
            result = multistart_minimize(
                _master_objective(classifier, z_points, n_v, config.penalty_weight,
                                  fixed_eps = eps_hi),
                v_box,
                n_starts = config.n_starts,
                seed = master_seed,
                tol = config.tol,
                max_iter = config.max_iter,
            )
            v_star, eps_star = result.x_star, eps_hi
            violation = max(svm_decision(classifier, np.concatenate([v_star, z, [eps_star]]))
                            for z in z_points)
            if violation > viol_tol:
                raise errors.NoFeasibleApproximatorError(
                    f'no parameters satisfy the classifier at eps={eps_hi:g} on '
                    f'{len(z_points)} points (violation {violation:g})'
                )

        worst_z, worst = _worst_violation(classifier, v_star, eps_star, z_box, config,
                                          derive_seed(seed, 'sip-inner', iteration))
        logger.debug('SIP iteration %d: eps=%g, worst violation %g', iteration, eps_star,
                     worst)
        if worst <= viol_tol:
            return SipResult(v_star, eps_star, z_points, iteration, worst)
        z_points = z_points + [worst_z]

    logger.warning('SIP exchange stopped after %d iterations with violation %g',
                   max_iterations, worst)
    return SipResult(v_star, eps_star, z_points, max_iterations, worst)


def sip_boxes(graph):
    """Return ``(v_box, z_box, eps_box)`` for a graph with ``z`` and ``eps`` roles.

    :raises MissingCouplingBoxError: if the graph has no coupling parameters
    """
    if not graph.is_coupled:
        raise errors.MissingCouplingBoxError(f'graph {graph.name} has no coupling box')
    v_box = box_product([graph.param_box(node.id) for node in graph.nodes])
    eps_width = dict(graph.coupling_roles).get('eps', 0)
    z_dim = graph.coupling_dim - eps_width
    if eps_width != 1:
        raise errors.UnknownRoleError(f'graph {graph.name} has no scalar eps role')
    return (v_box,
            graph.coupling_box.slice(0, z_dim),
            graph.coupling_box.slice(z_dim, z_dim + 1))


# -- registry ------------------------------------------------------------------------------

CASES = {
    'linear5': linear_example_graph,
    'linear5-narrow': lambda: linear_example_graph(NARROW_LINEAR_OFFSET, 'linear5-narrow'),
    'reactors': lambda: reactor_graph(ReactorParams.calibrated()),
    'reactors-published': lambda: reactor_graph(ReactorParams.published()),
    'funcapprox': approximator_graph,
}


def get_case(name):
    """Build the case study registered as ``name``.

    :rtype: :class:`GraphSpec`

    :raises UnknownCaseError: if ``name`` is not in :data:`CASES`
    """
    if not checkers.is_string(name) or name not in CASES:
        raise errors.UnknownCaseError(f'case ({name}) is not one of {sorted(CASES)}')
    return CASES[name]()
