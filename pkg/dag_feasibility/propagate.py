# -*- coding: utf-8 -*-
"""Forward, backward and composed propagation of node-local feasible sets.

A pass visits every node once, in precedence order (``f``) or in reverse (``b``). For each
node it estimates a search box over the node's subproblem coordinates ``[v_i | u_i | z]``,
samples that box with a feasibility check that combines the node's true constraints with
embedded coupling problems against its already-solved neighbours, and fits a classifier
(and, where later checks need them, edge regressors) to the result.

In a composed pass such as ``fb`` the checks against neighbours solved earlier in the same
pass use that pass's surrogates, and the checks against the other side are retained from
the previous pass.
"""
import logging
import os
from collections import Counter, OrderedDict, namedtuple

import numpy as np
import simplejson as json
from scipy.optimize import approx_fprime
from validator_collection import validators, checkers

from dag_feasibility import errors
from dag_feasibility.config import SamplerConfig, SurrogateConfig, NlpConfig, validate_directions
from dag_feasibility.domains import Box, SampleSet, box_product, interval_hull, project
from dag_feasibility.graph import NodeSpec, build_graph
from dag_feasibility.optim import multistart_minimize, penalty_objective
from dag_feasibility.samplers import EvalCounter, derive_seed, draw_samples, sobol, scale_to_box
from dag_feasibility.surrogates import (fit_classifier, train_krr, svm_decision, svm_gradient,
                                        krr_predict, krr_jacobian, surrogate_from_dict,
                                        CvReport)

logger = logging.getLogger(__name__)

COPY_TOLERANCE = 1e-9


# -- lifting -------------------------------------------------------------------------------

def _lifted_constraint(spec, param_dim, in_blocks, lift_dim):
    def constraint(v, u):
        z = v[param_dim:]
        payloads, copies = [], []
        start = 0
        for width in in_blocks:
            payloads.append(u[start:start + width])
            copies.append(u[start + width:start + width + lift_dim])
            start += width + lift_dim
        base = np.atleast_1d(np.asarray(spec.constraint_fn(v[:param_dim],
                                                           np.concatenate(payloads or
                                                                          [np.zeros(0)]),
                                                           z),
                                        dtype = float)).reshape(-1)
        if not copies:
            return base
        gap = max(float(np.max(np.abs(copy - z))) for copy in copies)
        return np.concatenate([base, [gap - COPY_TOLERANCE]])
    return constraint


def _lifted_constituent(fn, param_dim, in_blocks, lift_dim):
    def constituent(v, u):
        z = v[param_dim:]
        payloads = []
        start = 0
        for width in in_blocks:
            payloads.append(u[start:start + width])
            start += width + lift_dim
        y = np.atleast_1d(np.asarray(fn(v[:param_dim],
                                        np.concatenate(payloads or [np.zeros(0)]),
                                        z),
                                     dtype = float)).reshape(-1)
        return np.concatenate([y, z])
    return constituent


def lift_coupling(graph):
    """Give every node a local copy of the coupling parameters.

    Each node's parameter box is extended by the coupling box, every edge carries the
    sender's copy after its payload (``[F_i^k(v_i, u_i, z_i), z_i]``), and each node with
    in-edges gains one constraint row requiring its copy to equal every received copy.
    Callables of the returned graph take ``(v, u)``; the original ``(v, u, z)`` callables
    receive the node's local copy.

    :rtype: :class:`GraphSpec`

    :raises MissingCouplingBoxError: if the graph has no coupling box
    """
    if not graph.is_coupled:
        raise errors.MissingCouplingBoxError(f'graph {graph.name} has no coupling parameters '
                                             'to lift')
    if graph.is_lifted:
        return graph

    lift_dim = graph.coupling_dim
    nodes = []
    for spec in graph.nodes:
        param_dim = spec.param_box.dim
        in_blocks = [graph.edge(source, spec.id).dim for source in graph.in_neighbours(spec.id)]
        nodes.append(NodeSpec(
            spec.id,
            box_product([spec.param_box, graph.coupling_box]),
            _lifted_constraint(spec, param_dim, in_blocks, lift_dim),
            {target: _lifted_constituent(fn, param_dim, in_blocks, lift_dim)
             for target, fn in spec.constituent_fns.items()},
            name = spec.name,
            cheap = spec.cheap,
        ))
    edges = [(edge.source, edge.target, edge.dim + lift_dim) for edge in graph.edges]

    return build_graph(nodes,
                       edges,
                       coupling_box = graph.coupling_box,
                       coupling_roles = graph.coupling_roles,
                       name = graph.name,
                       lifted = True)


# -- state ---------------------------------------------------------------------------------

class NodeState(object):
    """Result of solving one node's subproblem in one pass."""

    def __init__(self,
                 node,
                 direction_tag,
                 input_box,
                 search_box,
                 samples,
                 classifier,
                 regressors = None,
                 cv_report = None,
                 regressor_reports = None,
                 outputs = None,
                 diagnostics = None):
        self._node = validators.integer(node, minimum = 0, coerce_value = True)
        self._direction_tag = validate_directions(direction_tag)
        self._input_box = input_box
        self._search_box = search_box
        if not isinstance(samples, SampleSet):
            raise ValueError(f'samples must be a SampleSet. Was: {samples.__class__.__name__}')
        self._samples = samples
        self._classifier = classifier
        self._regressors = dict(regressors or {})
        self._cv_report = cv_report
        self._regressor_reports = dict(regressor_reports or {})
        self._outputs = dict(outputs or {})
        self._diagnostics = dict(diagnostics or {})

    @property
    def node(self):
        """:rtype: :class:`int <python:int>`"""
        return self._node

    @property
    def direction_tag(self):
        """Tag of the pass that produced this state, e.g. ``'f'`` or ``'fb'``.

        :rtype: :class:`str <python:str>`
        """
        return self._direction_tag

    @property
    def input_box(self):
        """Estimated domain of the node's inputs ``u_i`` (0-dimensional for roots).

        :rtype: :class:`Box`
        """
        return self._input_box

    @property
    def search_box(self):
        """Box the subproblem was sampled over, in subproblem coordinates.

        :rtype: :class:`Box`
        """
        return self._search_box

    @property
    def samples(self):
        """Every evaluated candidate, labeled.

        :rtype: :class:`SampleSet`
        """
        return self._samples

    @property
    def classifier(self):
        """:rtype: :class:`SvmClassifier`"""
        return self._classifier

    @property
    def regressors(self):
        """Map of out-neighbour to the regressor of that edge's payload.

        :rtype: :class:`dict <python:dict>`
        """
        return dict(self._regressors)

    @property
    def cv_report(self):
        return self._cv_report

    @property
    def regressor_reports(self):
        return dict(self._regressor_reports)

    @property
    def outputs(self):
        """Map of out-neighbour to the payloads of the feasible samples (one row each).

        Only available for states produced in the current process.

        :rtype: :class:`dict <python:dict>`
        """
        return dict(self._outputs)

    @property
    def diagnostics(self):
        """Counts of rejected candidates by cause and of non-converged embedded solves.

        :rtype: :class:`dict <python:dict>`
        """
        return dict(self._diagnostics)

    @property
    def n_feasible(self):
        return self._samples.n_feasible

    def manifest(self):
        return {
            'node': self._node,
            'direction_tag': self._direction_tag,
            'input_box': self._input_box.to_dict(),
            'search_box': self._search_box.to_dict(),
            'n_samples': self._samples.size,
            'n_feasible': self._samples.n_feasible,
            'n_evaluations': self._samples.n_evaluations,
            'cv_report': self._cv_report.to_dict() if self._cv_report else None,
            'regressor_reports': {str(target): report.to_dict()
                                  for target, report in self._regressor_reports.items()},
            'diagnostics': self._diagnostics,
        }

    def __repr__(self):
        return (f'NodeState(node={self._node}, tag={self._direction_tag!r}, '
                f'samples={self._samples.size}, feasible={self._samples.n_feasible})')


class PropagationState(object):
    """Every pass of a propagation run, keyed by pass tag and node.

    :param graph: The graph the run worked on (lifted if the input graph was coupled).
    :type graph: :class:`GraphSpec`
    """

    def __init__(self,
                 graph,
                 directions,
                 seed = 0,
                 counter = None,
                 passes = None,
                 backward_domains = None,
                 config_hash = None):
        self._graph = graph
        self._directions = validate_directions(directions)
        self._seed = validators.integer(seed, minimum = 0, coerce_value = True)
        self._counter = counter if counter is not None else EvalCounter()
        self._passes = OrderedDict(passes or {})
        self._backward_domains = dict(backward_domains or {})
        self._config_hash = config_hash

    @property
    def graph(self):
        """:rtype: :class:`GraphSpec`"""
        return self._graph

    @property
    def directions(self):
        """:rtype: :class:`str <python:str>`"""
        return self._directions

    @property
    def seed(self):
        return self._seed

    @property
    def counter(self):
        """Work spent by the run, domain estimation included.

        :rtype: :class:`EvalCounter`
        """
        return self._counter

    @property
    def config_hash(self):
        return self._config_hash

    @property
    def backward_domains(self):
        """Input boxes from :func:`estimate_backward_domains`, if it ran.

        :rtype: :class:`dict <python:dict>`
        """
        return dict(self._backward_domains)

    @property
    def tags(self):
        """Pass tags in execution order, e.g. ``['f', 'fb']``.

        :rtype: :class:`list <python:list>`
        """
        return list(self._passes)

    @property
    def is_complete(self):
        return self.tags == [self._directions[:p + 1] for p in range(len(self._directions))] \
            and all(len(nodes) == self._graph.n_nodes for nodes in self._passes.values())

    def pass_states(self, tag):
        """Return the ``{node: NodeState}`` map of pass ``tag``.

        :rtype: :class:`dict <python:dict>`
        """
        try:
            return dict(self._passes[tag])
        except KeyError:
            raise KeyError(f'no pass "{tag}" in {self.tags}')

    def node_state(self, node, tag = None):
        """Return the state of ``node`` in pass ``tag`` (the final pass by default).

        :rtype: :class:`NodeState`
        """
        tag = tag or self._directions
        states = self.pass_states(tag)
        if node not in states:
            raise KeyError(f'node {node} was not solved in pass "{tag}"')
        return states[node]

    def final_states(self):
        return self.pass_states(self._directions)

    def _record(self, state):
        self._passes.setdefault(state.direction_tag, OrderedDict())[state.node] = state

    def to_directory(self, path):
        """Persist the state under ``path``.

        Layout: ``state.json`` (directions, seed, config hash, counters, per-pass node
        manifests), ``nodes/node<i>.csv`` (final pass), ``passes/<tag>/node<i>.csv``,
        ``classifiers/<tag>_node<i>.json`` and ``regressors/<tag>_node<i>_to<k>.json``.

        :returns: ``path``
        """
        path = validators.path(path)
        for folder in ('nodes', 'passes', 'classifiers', 'regressors'):
            os.makedirs(os.path.join(path, folder), exist_ok = True)

        manifest = {
            'graph': self._graph.to_dict(),
            'directions': self._directions,
            'seed': self._seed,
            'config_hash': self._config_hash,
            'counter': self._counter.to_dict(),
            'backward_domains': {str(node): box.to_dict()
                                 for node, box in self._backward_domains.items()},
            'passes': OrderedDict(),
        }
        for tag, states in self._passes.items():
            os.makedirs(os.path.join(path, 'passes', tag), exist_ok = True)
            entries = {}
            for node, state in states.items():
                state.samples.to_csv(os.path.join(path, 'passes', tag, f'node{node}.csv'))
                if tag == self._directions:
                    state.samples.to_csv(os.path.join(path, 'nodes', f'node{node}.csv'))
                _dump_json(state.classifier.to_dict(),
                           os.path.join(path, 'classifiers', f'{tag}_node{node}.json'))
                for target, regressor in state.regressors.items():
                    _dump_json(regressor.to_dict(),
                               os.path.join(path, 'regressors',
                                            f'{tag}_node{node}_to{target}.json'))
                entries[str(node)] = state.manifest()
            manifest['passes'][tag] = entries

        _dump_json(manifest, os.path.join(path, 'state.json'))
        logger.info('saved propagation state to %s', path)
        return path

    @classmethod
    def from_directory(cls, path, graph):
        """Load a state written by :meth:`to_directory`.

        :param graph: The graph the run was made on (lifted here if it is coupled).
        :type graph: :class:`GraphSpec`

        :raises GraphMismatchError: if the saved run was made on a different graph
        """
        manifest_path = os.path.join(path, 'state.json')
        if not checkers.is_file(manifest_path):
            raise FileNotFoundError(f'no propagation state at {path}')
        with open(manifest_path, 'r') as file_:
            manifest = json.load(file_)

        saved_name = manifest.get('graph', {}).get('name')
        if saved_name != graph.name:
            raise errors.GraphMismatchError(f'state at {path} belongs to graph "{saved_name}", '
                                            f'not "{graph.name}"')
        working = lift_coupling(graph) if graph.is_coupled else graph

        state = cls(working,
                    manifest['directions'],
                    seed = manifest.get('seed', 0),
                    counter = EvalCounter.from_dict(manifest.get('counter', {})),
                    backward_domains = {int(node): Box.from_dict(box) for node, box in
                                        (manifest.get('backward_domains') or {}).items()},
                    config_hash = manifest.get('config_hash'))
        for tag, entries in manifest.get('passes', {}).items():
            for key, entry in entries.items():
                node = int(key)
                samples = SampleSet.from_csv(os.path.join(path, 'passes', tag,
                                                          f'node{node}.csv'))
                classifier = surrogate_from_dict(
                    _load_json(os.path.join(path, 'classifiers', f'{tag}_node{node}.json'))
                )
                regressors = {}
                for target in entry.get('regressor_reports', {}):
                    regressors[int(target)] = surrogate_from_dict(_load_json(
                        os.path.join(path, 'regressors', f'{tag}_node{node}_to{target}.json')
                    ))
                cv_report = entry.get('cv_report')
                state._record(NodeState(
                    node,
                    tag,
                    Box.from_dict(entry['input_box']),
                    Box.from_dict(entry['search_box']),
                    samples,
                    classifier,
                    regressors = regressors,
                    cv_report = CvReport.from_dict(cv_report) if cv_report else None,
                    regressor_reports = {int(target): CvReport.from_dict(report)
                                         for target, report in
                                         entry.get('regressor_reports', {}).items()},
                    diagnostics = entry.get('diagnostics'),
                ))

        return state

    def __repr__(self):
        return (f'PropagationState(graph={self._graph.name!r}, '
                f'directions={self._directions!r}, passes={self.tags})')


def _dump_json(as_dict, path):
    with open(path, 'w') as file_:
        json.dump(as_dict, file_, indent = 2, sort_keys = True, ignore_nan = True)


def _load_json(path):
    with open(path, 'r') as file_:
        return json.load(file_)


# -- search domains ------------------------------------------------------------------------

def estimate_backward_domains(graph, n_sobol = 8192, inflation = 0.05, counter = None,
                              seed = None):
    """Estimate every node's input domain by forward-evaluating a space-filling design.

    The composite is evaluated at ``n_sobol`` Sobol points of the joint box (parameters,
    plus coupling parameters on coupled graphs). Each node with in-edges gets the interval
    hull of the inputs it received, inflated by ``inflation``; roots get the empty box.
    Only nodes with out-edges are evaluated, so ``n_sobol`` evaluations are charged per
    such node.

    :rtype: :class:`dict <python:dict>` of node id to :class:`Box`
    """
    n_sobol = validators.integer(n_sobol, minimum = 2, coerce_value = True)
    inflation = validators.float(inflation, minimum = 0)
    counter = counter if counter is not None else EvalCounter()

    box = graph.joint_box()
    n_v = box.dim - graph.coupling_dim
    points = scale_to_box(sobol(box.dim, n_sobol, seed = seed), box)
    received = {node.id: [] for node in graph.nodes}
    spent = 0
    for point in points:
        z = point[n_v:] if graph.is_coupled else None
        result = graph.evaluate_forward(point[:n_v], z, constraints = False)
        spent += result.n_evaluations
        for node, u in result.inputs.items():
            received[node].append(u)
    counter.add(constituent = spent)

    domains = {}
    for node in graph.nodes:
        if not graph.in_neighbours(node.id):
            domains[node.id] = Box.empty()
        else:
            domains[node.id] = interval_hull(np.vstack(received[node.id]), inflation)
    logger.info('estimated input domains from %d design points (%d evaluations)', n_sobol,
                spent)
    return domains


def forward_input_domain(node, upstream_states, inflation = 0.05):
    """Return the hull of the payloads that the in-neighbours' feasible samples send to
    ``node``, concatenated in ascending source order and inflated by ``inflation``.

    :param upstream_states: Map of in-neighbour id to its :class:`NodeState`.

    :raises EmptyUpstreamSolutionError: if an in-neighbour has no feasible sample
    """
    if not upstream_states:
        return Box.empty()
    boxes = []
    for source in sorted(upstream_states):
        state = upstream_states[source]
        if state.n_feasible == 0:
            raise errors.EmptyUpstreamSolutionError(f'in-neighbour {source} of node {node} '
                                                    'has no feasible samples')
        images = state.outputs.get(node)
        if images is None or len(images) == 0:
            raise errors.EmptyUpstreamSolutionError(f'in-neighbour {source} recorded no '
                                                    f'payloads for node {node}')
        boxes.append(interval_hull(np.asarray(images), inflation))
    return box_product(boxes)


def _previous_hull(graph, state, inflation):
    """Inflated hull of a previous pass's feasible points, with parameter and coupling
    columns clipped to their declared boxes."""
    hull = interval_hull(state.samples.feasible().points, inflation)
    lo, hi = hull.lo.copy(), hull.hi.copy()
    node = state.node
    declared = [(0, graph.param_box(node))]
    if graph.is_coupled:
        declared.append((graph.subproblem_dim(node) - graph.coupling_dim, graph.coupling_box))
    for start, box in declared:
        stop = start + box.dim
        lo[start:stop] = np.clip(lo[start:stop], box.lo, box.hi)
        hi[start:stop] = np.clip(hi[start:stop], box.lo, box.hi)
    return Box(lo, hi)


def _search_box(graph, node, input_box):
    parts = [graph.param_box(node), input_box]
    if graph.is_coupled:
        parts.append(graph.coupling_box)
    return box_product(parts)


# -- embedded coupling problems ------------------------------------------------------------

class _Problem(object):
    """Free variables, classifier terms and payload residuals of one embedded NLP."""

    def __init__(self):
        self._lo, self._hi = [], []
        self.size = 0
        self.terms = []
        self.residual = None

    def add(self, box):
        block = slice(self.size, self.size + box.dim)
        self._lo.append(box.lo)
        self._hi.append(box.hi)
        self.size += box.dim
        return block

    def box(self):
        if not self.size:
            return Box.empty()
        return Box(np.concatenate(self._lo), np.concatenate(self._hi))

    def classifier_value(self, x):
        value, _ = self._max_term(x)
        return value

    def residual_size(self, x):
        if self.residual is None:
            return 0.0
        r, _ = self.residual(x)
        return float(np.max(np.abs(r))) if r.size else 0.0

    def _max_term(self, x):
        best, gradient = -np.inf, np.zeros(self.size)
        for term in self.terms:
            value, grad = term(x)
            if value > best:
                best, gradient = value, grad
        return best, gradient

    def objective(self, weight):
        if self.residual is None:
            return self._max_term
        return penalty_objective(self._max_term, self.residual, weight)


def _local_roles(graph, node):
    roles = graph.subproblem_roles(node)
    return roles[:len(roles) - len(graph.coupling_roles)]


def _role_slices(graph, node):
    slices, start = {}, 0
    for tag, width in graph.subproblem_roles(node):
        slices[tag] = slice(start, start + width)
        start += width
    return slices


def _input_builder(graph, node, parts, z, size):
    """Return ``x -> (s, ds/dx)`` assembling node ``node``'s subproblem point from free
    blocks of ``x``, fixed vectors, and mapped blocks."""
    roles = _local_roles(graph, node)

    def build(x):
        values, jacobians = [], []
        for tag, width in roles:
            kind, data = parts[tag]
            if kind == 'free':
                values.append(x[data])
                jacobian = np.zeros((width, size))
                jacobian[:, data] = np.eye(width)
            elif kind == 'fixed':
                values.append(np.asarray(data, dtype = float))
                jacobian = np.zeros((width, size))
            else:
                value, jacobian = data(x)
                values.append(value)
            jacobians.append(jacobian)
        values.append(z)
        jacobians.append(np.zeros((z.size, size)))
        return np.concatenate(values), np.vstack(jacobians)

    return build


def _classifier_term(classifier, build, hinge = False):
    def term(x):
        s, ds = build(x)
        value = svm_decision(classifier, s)
        if hinge and value <= 0.0:
            return 0.0, np.zeros(ds.shape[1])
        return value, svm_gradient(classifier, s) @ ds
    return term


class _Charges(object):
    """Work spent and rejection reasons recorded while checking one candidate."""

    def __init__(self):
        self.evaluations = 1
        self.nlp_solves = 0
        self.tally = Counter()


_Outcome = namedtuple('_Outcome', ['outputs', 'charges'])


def _merge_charges(outcomes, counter):
    """Charge the NLP solves of ``outcomes`` to ``counter`` and return their tally."""
    tally = Counter()
    nlp_solves = 0
    for outcome in outcomes:
        tally.update(outcome.charges.tally)
        nlp_solves += outcome.charges.nlp_solves
    counter.add(nlp = nlp_solves)
    return dict(sorted(tally.items()))


class _CheckContext(object):
    """Everything a candidate check needs: the graph, the neighbour states it couples to
    and the solver settings. Read-only once built, so checks may run on several threads."""

    def __init__(self, graph, node, config, counter, seed, tag, sibling_terms,
                 coparent_terms, cheap_nodes, input_box):
        self.graph = graph
        self.node = node
        self.config = config
        self.counter = counter
        self.seed = seed
        self.tag = tag
        self.sibling_terms = sibling_terms
        self.coparent_terms = coparent_terms
        self.cheap_nodes = set(cheap_nodes)
        width = np.asarray(input_box.width, dtype = float)
        self.input_width = np.where(width > 0, width, 1.0)
        self.slices = _role_slices(graph, node)
        self.input_offset = graph.param_dim(node)

    def free_parts(self, problem, state, skip = ()):
        """Add the local blocks of ``state``'s node as free variables, except ``skip``."""
        slices = _role_slices(self.graph, state.node)
        parts = {}
        for tag, _ in _local_roles(self.graph, state.node):
            if tag in skip:
                continue
            parts[tag] = ('free', problem.add(state.search_box.slice(slices[tag].start,
                                                                     slices[tag].stop)))
        return parts

    def edge_map(self, state, target, build, charges):
        """``x -> (payload, d payload / dx)`` of edge ``(state.node, target)``, by regressor
        or, for cheap nodes and edges without one, by the true map."""
        source = state.node
        regressor = state.regressors.get(target)
        if regressor is not None and source not in self.cheap_nodes:
            def mapped(x):
                s, ds = build(x)
                return krr_predict(regressor, s), krr_jacobian(regressor, s) @ ds
            return mapped

        graph = self.graph
        n_v = graph.param_dim(source)
        n_local = n_v + graph.input_dim(source)

        def true_map(local, z):
            charges.evaluations += 1
            result = graph.evaluate_node(source, local[:n_v], local[n_v:], z,
                                         constraints = False)
            return result.outputs[target]

        def mapped(x):
            s, ds = build(x)
            local, z = s[:n_local], s[n_local:]
            z = z if graph.is_coupled else None
            value = true_map(local, z)
            if n_local == 0:
                return value, np.zeros((value.size, ds.shape[1]))
            steps = 1e-6 * np.maximum(1.0, np.abs(local))
            jacobian = np.atleast_2d(approx_fprime(local, lambda p: true_map(p, z), steps))
            jacobian = jacobian.reshape(value.size, n_local)
            return value, np.hstack([jacobian, np.zeros((value.size, s.size - n_local))]) @ ds
        return mapped

    def solve(self, problem, accept, neighbour, charges):
        """Run the embedded problem; only a converged, accepted solve certifies."""
        charges.nlp_solves += 1
        result = multistart_minimize(problem.objective(self.config.penalty_weight),
                                     problem.box(),
                                     n_starts = self.config.n_starts,
                                     seed = derive_seed(self.seed, 'nlp', self.tag, self.node,
                                                        neighbour),
                                     tol = self.config.tol,
                                     max_iter = self.config.max_iter,
                                     stop_when = lambda found: found.converged and accept(found))
        if not result.converged:
            charges.tally['nlp_not_converged'] += 1
            logger.debug('pass %s: node %d solve against %s did not converge', self.tag,
                         self.node, neighbour)
            return False
        return accept(result)


def _upstream_certified(context, states, u, z, charges):
    """Forward coupling: every in-neighbour ``j`` must admit a point with
    ``G_j <= feas_tol`` whose payload reproduces ``u_i^j``."""
    graph, node = context.graph, context.node
    for source in graph.in_neighbours(node):
        state = states[source]
        problem = _Problem()
        own = context.free_parts(problem, state)
        siblings = []
        if context.sibling_terms:
            for sibling in graph.out_neighbours(source):
                if sibling == node or sibling not in states or \
                        graph.position(sibling) >= graph.position(node):
                    continue
                skip = (f'u{source}>{sibling}',)
                siblings.append((sibling, context.free_parts(problem, states[sibling], skip)))

        size = problem.size
        build_source = _input_builder(graph, source, own, z, size)
        problem.terms.append(_classifier_term(state.classifier, build_source))
        for sibling, parts in siblings:
            parts[f'u{source}>{sibling}'] = ('map', context.edge_map(state, sibling,
                                                                     build_source, charges))
            build_sibling = _input_builder(graph, sibling, parts, z, size)
            problem.terms.append(_classifier_term(states[sibling].classifier, build_sibling,
                                                  hinge = True))

        block = context.slices[f'u{source}>{node}']
        target = u[block.start - context.input_offset:block.stop - context.input_offset]
        width = context.input_width[block.start - context.input_offset:
                                    block.stop - context.input_offset]
        payload = context.edge_map(state, node, build_source, charges)

        def residual(x, payload = payload, target = target, width = width):
            value, jacobian = payload(x)
            return (value - target) / width, jacobian / width[:, None]
        problem.residual = residual

        def accept(result, problem = problem):
            return problem.classifier_value(result.x_star) <= context.config.feas_tol and \
                problem.residual_size(result.x_star) <= context.config.res_tol

        if not context.solve(problem, accept, source, charges):
            return False
    return True


def _downstream_certified(context, states, payloads, z, charges):
    """Backward coupling: every out-neighbour ``k`` must admit a completion of its
    subproblem, given the exact payload ``y_i^k``, with ``G_k <= feas_tol``."""
    graph, node = context.graph, context.node
    for target in graph.out_neighbours(node):
        state = states[target]
        problem = _Problem()
        fixed_tag = f'u{node}>{target}'
        later = []
        if context.coparent_terms:
            later = [coparent for coparent in graph.in_neighbours(target)
                     if coparent != node and coparent in states and
                     graph.position(coparent) > graph.position(node)]
        mapped_tags = tuple(f'u{coparent}>{target}' for coparent in later)
        parts = context.free_parts(problem, state, skip = (fixed_tag,) + mapped_tags)
        parts[fixed_tag] = ('fixed', payloads[target])

        coparents = [(coparent, tag, context.free_parts(problem, states[coparent]))
                     for coparent, tag in zip(later, mapped_tags)]
        size = problem.size
        for coparent, tag, own in coparents:
            build_coparent = _input_builder(graph, coparent, own, z, size)
            parts[tag] = ('map', context.edge_map(states[coparent], target, build_coparent,
                                                  charges))
            problem.terms.append(_classifier_term(states[coparent].classifier,
                                                  build_coparent, hinge = True))
        build_target = _input_builder(graph, target, parts, z, size)
        problem.terms.insert(0, _classifier_term(state.classifier, build_target))

        def accept(result, problem = problem):
            return problem.classifier_value(result.x_star) <= context.config.feas_tol

        if not context.solve(problem, accept, target, charges):
            return False
    return True


def _split_point(graph, node, point):
    n_v = graph.param_dim(node)
    n_u = graph.input_dim(node)
    z = point[n_v + n_u:] if graph.is_coupled else None
    return point[:n_v], point[n_v:n_v + n_u], z


def _check(context, upstream, downstream, point):
    """Evaluate one candidate: true local constraints first, then the coupling problems.

    Nothing shared is touched; the work spent and the rejection reason travel back in the
    :class:`_Outcome` payload and are charged only if the sampler keeps the candidate.

    :returns: ``(feasible, evaluations, outcome)``
    """
    graph, node = context.graph, context.node
    v, u, z = _split_point(graph, node, point)
    result = graph.evaluate_node(node, v, u, z)
    charges = _Charges()
    feasible = _checked(context, upstream, downstream, u, z, result, charges)
    return feasible, charges.evaluations, _Outcome(result.outputs, charges)


def _checked(context, upstream, downstream, u, z, result, charges):
    if np.any(result.constraints > 0):
        charges.tally['local_constraint'] += 1
        return False

    z_vector = z if z is not None else np.zeros(0)
    if upstream is not None and \
            not _upstream_certified(context, upstream, u, z_vector, charges):
        charges.tally['upstream'] += 1
        return False
    if downstream is not None and \
            not _downstream_certified(context, downstream, result.outputs, z_vector, charges):
        charges.tally['downstream'] += 1
        return False
    return True


def _candidate(v, u, z):
    return np.concatenate([np.asarray(v, dtype = float).reshape(-1),
                           np.asarray(u, dtype = float).reshape(-1),
                           np.asarray(z if z is not None else [], dtype = float).reshape(-1)])


def _residual_box(graph, node, states):
    """Input box whose widths scale payload residuals of ``node``'s forward check."""
    if node in states:
        return states[node].input_box
    sources = graph.in_neighbours(node)
    if not sources:
        return Box.empty()
    if all(states[source].outputs for source in sources):
        return forward_input_domain(node, {source: states[source] for source in sources})
    return Box.unit(graph.input_dim(node))


def _charged_check(context, upstream, downstream, point):
    feasible, evaluations, outcome = _check(context, upstream, downstream, point)
    context.counter.add(constituent = evaluations, constraint = 1,
                        nlp = outcome.charges.nlp_solves)
    if outcome.charges.tally:
        logger.debug('node %d candidate rejected: %s', context.node,
                     dict(outcome.charges.tally))
    return feasible


def feasibility_forward(
node, v, u, state, nlp_config = None, counter = None, z = None,
                        tag = 'f', surrogate_config = None):
    """Check a candidate ``(v, u)`` of ``node`` against the forward relaxation.

    The node's own constraints are evaluated first (no embedded solve if they fail). Then,
    for each in-neighbour ``j``, an embedded problem searches ``j``'s subproblem box for a
    point whose classifier value is ``<= feas_tol`` and whose (regressed) payload matches
    ``u_i^j`` within ``res_tol`` of the input-box width. Earlier-ordered siblings of ``i``
    under ``j`` add ``max(0, G_k)`` terms when sibling terms are enabled.

    :param state: The propagation state holding pass ``tag`` with every in-neighbour.
    :type state: :class:`PropagationState`

    :rtype: :class:`bool <python:bool>`
    """
    graph = state.graph
    states = state.pass_states(tag)
    context = _context(graph, node, tag, nlp_config, surrogate_config, counter, state.seed,
                       _residual_box(graph, node, states))
    return _charged_check(context, states, None, _candidate(v, u, z))


def feasibility_backward(node, v, u, state, nlp_config = None, counter = None, z = None,
                         tag = 'b', surrogate_config = None):
    """Check a candidate ``(v, u)`` of ``node`` against the backward relaxation.

    After the node's own constraints, each out-neighbour ``k`` receives the exact payload
    ``F_i^k(v, u)`` and an embedded problem searches the rest of ``k``'s subproblem box for
    a classifier value ``<= feas_tol``. Later-ordered co-parents of ``k`` contribute
    ``max(0, G_j)`` terms with their payload to ``k`` regressed, when enabled.

    :rtype: :class:`bool <python:bool>`
    """
    graph = state.graph
    states = state.pass_states(tag)
    context = _context(graph, node, tag, nlp_config, surrogate_config, counter, state.seed,
                       Box.empty())
    return _charged_check(context, None, states, _candidate(v, u, z))


def _toggle(value):
    return True if value is None else bool(value)


def _context(graph, node, tag, nlp_config, surrogate_config, counter, seed, input_box):
    nlp_config = nlp_config if nlp_config is not None else NlpConfig()
    surrogate_config = surrogate_config if surrogate_config is not None else SurrogateConfig()
    counter = counter if counter is not None else EvalCounter()
    cheap = set(surrogate_config.cheap_nodes) | {spec.id for spec in graph.nodes if spec.cheap}
    return _CheckContext(graph, node, nlp_config, counter, seed, tag,
                         _toggle(nlp_config.sibling_terms),
                         _toggle(nlp_config.coparent_terms),
                         cheap,
                         input_box)


# -- passes --------------------------------------------------------------------------------

def _train_regressors(graph, node, samples, payloads, targets, config, seed, tag):
    feasible = samples.feasible_mask
    rows = np.flatnonzero(feasible)
    if rows.size < 2 * config.k_folds:
        rows = np.arange(samples.size)
    if rows.size < 2 * config.k_folds:
        logger.warning('node %d has %d samples; its edges use the true maps', node, rows.size)
        return {}, {}
    if rows.size > config.max_regression_points:
        rng = np.random.default_rng(derive_seed(seed, 'regression', tag, node))
        rows = np.sort(rng.choice(rows, size = config.max_regression_points, replace = False))

    regressors, reports = {}, {}
    for target in targets:
        outputs = np.vstack([payloads[row][target] for row in rows])
        try:
            regressor, report = train_krr(samples.points[rows],
                                          outputs,
                                          config.krr_grid,
                                          config.k_folds,
                                          seed = derive_seed(seed, 'surrogate', tag, node,
                                                             target))
        except errors.SingularKernelError as error:
            logger.warning('edge (%d, %d) uses the true map: %s', node, target, error)
            continue
        regressors[target], reports[target] = regressor, report
        logger.info('edge (%d, %d) regressor: cv mse %.3g', node, target, report.cv_score)
    return regressors, reports


def _regressor_targets(graph, node, letter, next_letter, coparent_terms, cheap):
    if node in cheap:
        return []
    targets = graph.out_neighbours(node)
    if letter == 'f' or next_letter == 'b':
        return list(targets)
    if coparent_terms:
        return [target for target in targets if len(graph.in_neighbours(target)) > 1]
    return []


def _solve_node(graph, node, letter, tag, search_box, input_box, upstream, downstream,
                sampler_config, nlp_config, surrogate_config, counter, seed, workers,
                next_letter):
    context = _context(graph, node, tag, nlp_config, surrogate_config, counter, seed,
                       input_box)
    sampler = sampler_config.copy(seed = derive_seed(seed, 'sampler', tag, node))

    def check(point):
        return _check(context, upstream, downstream, point)

    logger.info('pass %s: node %d over %d-dim box', tag, node, search_box.dim)
    try:
        samples, outcomes = draw_samples(check,
                                         search_box,
                                         sampler,
                                         counter,
                                         workers,
                                         column_roles = graph.subproblem_roles(node))
    except errors.BudgetExhaustedEmptyError as error:
        raise errors.EmptySubproblemSolutionError(
            node,
            f'pass {tag}: {error}',
            diagnostics = _merge_charges(error.payloads, counter)
        )
    diagnostics = _merge_charges(outcomes, counter)
    payloads = [outcome.outputs for outcome in outcomes]

    classifier, cv_report = fit_classifier(samples,
                                           surrogate_config,
                                           seed = derive_seed(seed, 'surrogate', tag, node),
                                           box = search_box)
    feasible_rows = np.flatnonzero(samples.feasible_mask)
    outputs = {target: np.vstack([payloads[row][target] for row in feasible_rows])
               for target in graph.out_neighbours(node)}
    targets = _regressor_targets(graph, node, letter, next_letter,
                                 context.coparent_terms, context.cheap_nodes)
    regressors, regressor_reports = _train_regressors(graph, node, samples, payloads, targets,
                                                      surrogate_config, seed, tag)
    logger.info('pass %s: node %d kept %d feasible of %d (%d evaluations), cv accuracy %.3f',
                tag, node, samples.n_feasible, samples.size, samples.n_evaluations,
                cv_report.cv_score)

    return NodeState(node,
                     tag,
                     input_box,
                     search_box,
                     samples,
                     classifier,
                     regressors = regressors,
                     cv_report = cv_report,
                     regressor_reports = regressor_reports,
                     outputs = outputs,
                     diagnostics = diagnostics)


def propagate(graph,
              directions = 'f',
              sampler_config = None,
              nlp_config = None,
              surrogate_config = None,
              seed = 0,
              n_sobol = 8192,
              inflation = 0.05,
              workers = 1,
              counter = None,
              config_hash = None):
    """Run the passes named by ``directions`` over ``graph``.

    For each letter, nodes are visited in precedence order (``f``) or in reverse (``b``).
    A node's search box is its parameter box times its input domain (times the coupling
    box): :func:`forward_input_domain` in the first ``f`` pass,
    :func:`estimate_backward_domains` in the first ``b`` pass, and the inflated hull of the
    previous pass's feasible samples afterwards. Candidates are sampled with the configured
    policy and checked with the true local constraints plus the embedded coupling problems;
    a classifier is then trained on the result, together with the edge regressors later
    checks rely on. Coupled graphs are lifted first (see :func:`lift_coupling`).

    :param graph: The graph to propagate over.
    :type graph: :class:`GraphSpec`

    :param directions: Pass letters, e.g. ``'f'``, ``'b'``, ``'fb'``.
    :type directions: :class:`str <python:str>`

    :param seed: Run seed; sampler, surrogate and solver seeds are derived from it.
    :type seed: :class:`int <python:int>`

    :rtype: :class:`PropagationState`

    :raises InvalidDirectionsError: if ``directions`` is empty or has letters other than
      ``f`` and ``b``
    :raises EmptySubproblemSolutionError: if a node yields no feasible sample
    """
    directions = validate_directions(directions)
    sampler_config = sampler_config if sampler_config is not None else SamplerConfig()
    nlp_config = nlp_config if nlp_config is not None else NlpConfig()
    surrogate_config = surrogate_config if surrogate_config is not None else \
        SurrogateConfig()
    counter = counter if counter is not None else EvalCounter()
    seed = validators.integer(seed, minimum = 0, coerce_value = True)
    inflation = validators.float(inflation, minimum = 0)

    working = lift_coupling(graph) if graph.is_coupled else graph
    state = PropagationState(working, directions, seed = seed, counter = counter,
                             config_hash = config_hash)
    order = list(working.order)

    previous = None
    for position, letter in enumerate(directions):
        tag = directions[:position + 1]
        next_letter = directions[position + 1] if position + 1 < len(directions) else None
        current = OrderedDict()
        previous_states = state.pass_states(previous) if previous else None
        if letter == 'b' and previous is None:
            domains = estimate_backward_domains(working, n_sobol, inflation, counter,
                                                seed = derive_seed(seed, 'domains') % 2**32)
            state._backward_domains = domains

        for node in (order if letter == 'f' else reversed(order)):
            if previous_states is not None:
                search_box = _previous_hull(working, previous_states[node], inflation)
                n_v = working.param_dim(node)
                input_box = search_box.slice(n_v, n_v + working.input_dim(node))
            elif letter == 'f':
                solved = {source: current[source] for source in working.in_neighbours(node)}
                input_box = forward_input_domain(node, solved, inflation)
                search_box = _search_box(working, node, input_box)
            else:
                input_box = state.backward_domains[node]
                search_box = _search_box(working, node, input_box)

            if letter == 'f':
                upstream, downstream = current, previous_states
            else:
                upstream, downstream = previous_states, current
            if upstream is not None and not working.in_neighbours(node):
                upstream = None
            if downstream is not None and not working.out_neighbours(node):
                downstream = None

            node_state = _solve_node(working, node, letter, tag, search_box, input_box,
                                     upstream, downstream, sampler_config, nlp_config,
                                     surrogate_config, counter, seed, workers, next_letter)
            current[node] = node_state
            state._record(node_state)

        previous = tag
        logger.info('pass %s complete: %r', tag, counter)

    return state


def reduced_coupling_domain(state):
    """Return the terminal node's final feasible samples projected onto the coupling
    columns.

    :rtype: :class:`SampleSet`

    :raises NotLiftedRunError: if the run had no coupling parameters
    """
    graph = state.graph
    if not graph.is_lifted:
        raise errors.NotLiftedRunError(f'run on {graph.name} has no lifted coupling '
                                       'parameters')
    terminal = graph.order[-1]
    samples = state.node_state(terminal).samples.feasible()
    return project(samples, [tag for tag, _ in graph.coupling_roles])


def inclusion_fraction(state, earlier, later, node, feas_tol = 1e-3):
    """Fraction of pass ``later``'s feasible samples of ``node`` that pass ``earlier``'s
    classifier (decision ``<= feas_tol``).

    :rtype: :class:`float <python:float>`
    """
    points = state.node_state(node, later).samples.feasible().points
    if points.shape[0] == 0:
        raise errors.EmptyPointSetError(f'node {node} has no feasible samples in "{later}"')
    classifier = state.node_state(node, earlier).classifier
    values = np.atleast_1d(svm_decision(classifier, points))
    return float(np.mean(values <= feas_tol))
