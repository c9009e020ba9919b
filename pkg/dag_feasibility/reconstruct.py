# -*- coding: utf-8 -*-
"""Joint feasible sets: reconstruction from propagated node samples, the simultaneous
baseline, and run comparison."""
import logging
import os

import numpy as np
import simplejson as json
from validator_collection import validators, checkers

from dag_feasibility import errors
from dag_feasibility.config import SamplerConfig, SamplingPolicyEnum
from dag_feasibility.domains import SampleSet, box_product, interval_hull
from dag_feasibility.propagate import reduced_coupling_domain
from dag_feasibility.samplers import (EvalCounter, acceptance_ratio, derive_seed, draw_samples,
                                      sample_candidates)
from dag_feasibility.surrogates import svm_decision

logger = logging.getLogger(__name__)

SOURCE_DECOMPOSITION = 'decomposition'
SOURCE_SIMULTANEOUS = 'simultaneous'


def evaluate_composite(graph, v, z = None):
    """Evaluate the whole composite at joint parameters ``v`` (and coupling ``z``).

    One forward pass in precedence order wires each node's outputs into its
    out-neighbours' inputs.

    :returns: ``(inputs, payloads, constraints, n_evaluations)`` keyed by node (payloads by
      edge).
    :rtype: :class:`CompositeEvaluation`
    """
    return graph.evaluate_forward(v, z)


def composite_feasibility(graph, v, z = None, short_circuit = True):
    """Return whether ``v`` (and ``z``) satisfy every node constraint, and the node
    evaluations spent.

    With ``short_circuit`` the pass stops at the first violated node, so only the nodes
    actually evaluated are counted.

    :rtype: :class:`tuple <python:tuple>` of :class:`bool <python:bool>` and
      :class:`int <python:int>`
    """
    result = graph.evaluate_forward(v, z, stop_on_violation = short_circuit)
    feasible = len(result.constraints) == graph.n_nodes and \
        all(np.all(values <= 0) for values in result.constraints.values())
    return feasible, max(1, result.n_evaluations)


def project_joint(graph, node, v, z = None):
    """Map joint points to ``node``'s subproblem coordinates ``[v_i | u_i (| z)]``.

    :param v: One joint parameter vector or a ``(n, n_v)`` array of them.
    :param z: Coupling parameters matching ``v`` row for row.

    :rtype: :class:`numpy.ndarray`
    """
    v = np.atleast_2d(np.asarray(v, dtype = float))
    if z is not None:
        z = np.atleast_2d(np.asarray(z, dtype = float))
    rows = []
    for index, row in enumerate(v):
        z_row = z[index] if z is not None else None
        result = graph.evaluate_forward(row, z_row, constraints = False)
        parts = [graph.split_params(row)[node], result.inputs[node]]
        if graph.is_coupled:
            parts.append(z_row)
        rows.append(np.concatenate(parts))
    return np.vstack(rows)


class ReconstructionResult(object):
    """Joint samples of a run together with the work that produced them.

    :param joint_samples: Every candidate checked, over the joint roles of the graph.
    :type joint_samples: :class:`SampleSet`

    :param counter: All work attributed to the run (for a decomposition run: domain
      estimation, propagation and reconstruction).
    :type counter: :class:`EvalCounter`

    :param source: ``'decomposition'`` or ``'simultaneous'``.
    :type source: :class:`str <python:str>`
    """

    def __init__(self,
                 joint_samples,
                 counter,
                 source,
                 graph_name,
                 directions = None,
                 seed = None,
                 config_hash = None,
                 draw_acceptance = None):
        if not isinstance(joint_samples, SampleSet):
            raise ValueError(f'joint_samples must be a SampleSet. '
                             f'Was: {joint_samples.__class__.__name__}')
        self._joint_samples = joint_samples
        self._counter = counter
        self._source = validators.string(source)
        if self._source not in (SOURCE_DECOMPOSITION, SOURCE_SIMULTANEOUS):
            raise ValueError(f'source must be "{SOURCE_DECOMPOSITION}" or '
                             f'"{SOURCE_SIMULTANEOUS}". Was: {source}')
        self._graph_name = validators.string(graph_name)
        self._directions = directions
        self._seed = seed
        self._config_hash = config_hash
        self._draw_acceptance = draw_acceptance

    @property
    def joint_samples(self):
        """:rtype: :class:`SampleSet`"""
        return self._joint_samples

    @property
    def counter(self):
        """:rtype: :class:`EvalCounter`"""
        return self._counter

    @property
    def source(self):
        """:rtype: :class:`str <python:str>`"""
        return self._source

    @property
    def graph_name(self):
        return self._graph_name

    @property
    def directions(self):
        return self._directions

    @property
    def seed(self):
        return self._seed

    @property
    def config_hash(self):
        return self._config_hash

    @property
    def n_feasible(self):
        return self._joint_samples.n_feasible

    @property
    def acceptance_ratio(self):
        """Joint feasible points per constituent evaluation, all run stages counted.

        :rtype: :class:`float <python:float>`
        """
        return acceptance_ratio(self.n_feasible, self._counter)

    @property
    def draw_acceptance(self):
        """Share of reconstruction draws that were jointly feasible.

        :rtype: :class:`float <python:float>` / :obj:`None <python:None>`
        """
        return self._draw_acceptance

    def metrics(self):
        """The contents of ``metrics.json``.

        :rtype: :class:`dict <python:dict>`
        """
        return {
            'graph': self._graph_name,
            'source': self._source,
            'directions': self._directions,
            'seed': self._seed,
            'config_hash': self._config_hash,
            'acceptance_ratio': self.acceptance_ratio,
            'draw_acceptance': self._draw_acceptance,
            'n_feasible': self.n_feasible,
            'n_samples': self._joint_samples.size,
            'counter': self._counter.to_dict(),
        }

    def to_directory(self, path):
        """Write ``joint_samples.csv`` (with its sidecar) and ``metrics.json`` to ``path``.

        :returns: ``path``
        """
        path = validators.path(path)
        os.makedirs(path, exist_ok = True)
        self._joint_samples.to_csv(os.path.join(path, 'joint_samples.csv'))
        with open(os.path.join(path, 'metrics.json'), 'w') as file_:
            json.dump(self.metrics(), file_, indent = 2, sort_keys = True, ignore_nan = True)
        logger.info('saved %s run to %s', self._source, path)
        return path

    @classmethod
    def from_directory(cls, path):
        """Load a result written by :meth:`to_directory`.

        :raises FileNotFoundError: if ``path`` holds no ``metrics.json``
        """
        metrics_path = os.path.join(path, 'metrics.json')
        if not checkers.is_file(metrics_path):
            raise FileNotFoundError(f'no run metrics at {path}')
        with open(metrics_path, 'r') as file_:
            metrics = json.load(file_)
        return cls(SampleSet.from_csv(os.path.join(path, 'joint_samples.csv')),
                   EvalCounter.from_dict(metrics.get('counter')),
                   metrics['source'],
                   metrics['graph'],
                   directions = metrics.get('directions'),
                   seed = metrics.get('seed'),
                   config_hash = metrics.get('config_hash'),
                   draw_acceptance = metrics.get('draw_acceptance'))

    def __repr__(self):
        return (f'ReconstructionResult(source={self._source!r}, graph={self._graph_name!r}, '
                f'feasible={self.n_feasible}, evals={self._counter.constituent_evals})')


def _node_pools(graph, state):
    pools = []
    for node in graph.nodes:
        feasible = state.node_state(node.id).samples.feasible()
        if feasible.size == 0:
            raise errors.EmptySubproblemSolutionError(node.id,
                                                      'no feasible samples to reconstruct '
                                                      'from')
        pools.append(feasible.columns(f'v{node.id}'))
    return pools


def _draw_batches(pools, z_pool, batch_size, seed):
    """Uniform draws from the Cartesian product of the node pools (and the ``z`` pool),
    one generator per batch."""
    batch = 0
    while True:
        rng = np.random.default_rng(derive_seed(seed, 'reconstruct', batch))
        parts = [pool[rng.integers(pool.shape[0], size = batch_size)] for pool in pools]
        if z_pool is not None:
            parts.append(z_pool[rng.integers(z_pool.shape[0], size = batch_size)])
        yield np.hstack(parts)
        batch += 1


def _joint_check(graph):
    n_v = sum(graph.param_dim(node.id) for node in graph.nodes)

    def check(point):
        z = point[n_v:] if graph.is_coupled else None
        return composite_feasibility(graph, point[:n_v], z)
    return check


def reconstruct(graph,
                state,
                target = 2000,
                budget = 10**6,
                seed = None,
                adaptive = False,
                workers = 1,
                sampler_config = None):
    """Rebuild the joint feasible set from the final pass of a propagation run.

    Each draw picks one feasible sample per node uniformly at random, takes its parameter
    columns, adds a ``z`` row from :func:`reduced_coupling_domain` on lifted runs, and is
    verified with the true functions. Drawing stops at ``target`` feasible points or once
    ``budget`` constituent evaluations are spent in this stage. With ``adaptive`` the
    interval hull of the per-node pools is sampled with the adaptive mixture sampler
    instead.

    The acceptance ratio of the result charges every evaluation of the run: domain
    estimation and propagation (``state.counter``) plus reconstruction.

    :param graph: The graph the run was made on.
    :type graph: :class:`GraphSpec`

    :param state: A completed propagation run.
    :type state: :class:`PropagationState`

    :param seed: Seed of the draw streams. Defaults to the run seed.

    :rtype: :class:`ReconstructionResult`

    :raises GraphMismatchError: if ``state`` was produced on another graph
    :raises BudgetExhaustedEmptyError: if no drawn point is jointly feasible
    """
    if state.graph.name != graph.name:
        raise errors.GraphMismatchError(f'state belongs to graph "{state.graph.name}", '
                                        f'not "{graph.name}"')
    seed = state.seed if seed is None else validators.integer(seed, minimum = 0,
                                                              coerce_value = True)
    sampler_config = sampler_config if sampler_config is not None else SamplerConfig()

    pools = _node_pools(graph, state)
    z_pool = reduced_coupling_domain(state).points if graph.is_coupled else None
    roles = graph.joint_roles()
    box = box_product([interval_hull(pool) for pool in pools] +
                      ([interval_hull(z_pool)] if z_pool is not None else []))
    stage = EvalCounter()

    if adaptive:
        config = sampler_config.copy(policy = SamplingPolicyEnum.ADAPTIVE_MIXTURE.value,
                                     target_feasible = target,
                                     max_evaluations = budget,
                                     seed = derive_seed(seed, 'reconstruct') % 2**32)
        samples, _ = draw_samples(_joint_check(graph), box, config, stage, workers,
                                  column_roles = roles)
    else:
        samples, _ = sample_candidates(_joint_check(graph),
                                       _draw_batches(pools, z_pool,
                                                     sampler_config.batch_size, seed),
                                       box,
                                       target,
                                       budget,
                                       counter = stage,
                                       workers = workers,
                                       column_roles = roles,
                                       metadata = {'policy': 'product-draws'})

    draw_acceptance = samples.n_feasible / samples.size
    total = state.counter + stage
    logger.info('reconstructed %d joint feasible points from %d draws (%d evaluations, '
                '%d including propagation)', samples.n_feasible, samples.size,
                stage.constituent_evals, total.constituent_evals)

    return ReconstructionResult(samples,
                                total,
                                SOURCE_DECOMPOSITION,
                                graph.name,
                                directions = state.directions,
                                seed = seed,
                                config_hash = state.config_hash,
                                draw_acceptance = draw_acceptance)


def simultaneous(graph, sampler_config = None, counter = None, workers = 1, config_hash = None):
    """Sample the full joint box directly, checking every node constraint per candidate.

    :param sampler_config: Policy, target, budget and seed of the sampler.
    :type sampler_config: :class:`SamplerConfig`

    :rtype: :class:`ReconstructionResult`

    :raises BudgetExhaustedEmptyError: if the budget is spent without a feasible point
    """
    sampler_config = sampler_config if sampler_config is not None else SamplerConfig()
    counter = counter if counter is not None else EvalCounter()
    before = counter.copy()

    samples, _ = draw_samples(_joint_check(graph),
                              graph.joint_box(),
                              sampler_config,
                              counter,
                              workers,
                              column_roles = graph.joint_roles())
    spent = counter - before
    logger.info('simultaneous sampling kept %d of %d candidates (%d evaluations)',
                samples.n_feasible, samples.size, spent.constituent_evals)

    return ReconstructionResult(samples,
                                spent,
                                SOURCE_SIMULTANEOUS,
                                graph.name,
                                seed = sampler_config.seed,
                                config_hash = config_hash,
                                draw_acceptance = samples.n_feasible / samples.size)


def _ratio(numerator, denominator):
    if denominator == 0:
        return 'nan' if numerator == 0 else 'inf'
    return numerator / denominator


def _summary(result):
    return {
        'source': result.source,
        'directions': result.directions,
        'acceptance_ratio': result.acceptance_ratio,
        'constituent_evals': result.counter.constituent_evals,
        'n_feasible': result.n_feasible,
        'seed': result.seed,
    }


def compare_runs(a, b):
    """Compare two runs on the same graph.

    ``ar_ratio`` is ``AR(a) / AR(b)``; a zero denominator is reported as ``"inf"`` (or
    ``"nan"`` when both are zero).

    :type a: :class:`ReconstructionResult`
    :type b: :class:`ReconstructionResult`

    :rtype: :class:`dict <python:dict>`

    :raises GraphMismatchError: if the runs were made on different graphs
    """
    if a.graph_name != b.graph_name:
        raise errors.GraphMismatchError(f'cannot compare a run on "{a.graph_name}" with a '
                                        f'run on "{b.graph_name}"')
    return {
        'graph': a.graph_name,
        'a': _summary(a),
        'b': _summary(b),
        'ar_ratio': _ratio(a.acceptance_ratio, b.acceptance_ratio),
        'eval_ratio': _ratio(a.counter.constituent_evals, b.counter.constituent_evals),
        'feasible_ratio': _ratio(a.n_feasible, b.n_feasible),
    }


def outer_approximation_fraction(state, oracle_samples, node, feas_tol = 1e-3, tag = None):
    """Fraction of an oracle's feasible joint points that ``node``'s classifier accepts
    once projected to the node's subproblem coordinates.

    :param oracle_samples: Labeled joint points, e.g. from
      :func:`dag_feasibility.models.brute_force_oracle`.
    :type oracle_samples: :class:`SampleSet`

    :rtype: :class:`float <python:float>`

    :raises EmptyPointSetError: if the oracle has no feasible point
    """
    graph = state.graph
    feasible = oracle_samples.feasible().points
    if feasible.shape[0] == 0:
        raise errors.EmptyPointSetError('the oracle found no feasible joint point')
    n_v = feasible.shape[1] - graph.coupling_dim
    z = feasible[:, n_v:] if graph.is_coupled else None
    projected = project_joint(graph, node, feasible[:, :n_v], z)
    values = np.atleast_1d(svm_decision(state.node_state(node, tag).classifier, projected))
    return float(np.mean(values <= feas_tol))
