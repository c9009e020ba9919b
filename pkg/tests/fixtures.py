# -*- coding: utf-8 -*-

"""
***********************************
tests._fixtures
***********************************

Fixtures used by the DAG Feasibility test suite.

"""
import numpy as np
import pytest

from dag_feasibility.config import SamplerConfig, SurrogateConfig, NlpConfig
from dag_feasibility.domains import Box
from dag_feasibility.graph import NodeSpec, build_graph
from dag_feasibility.models import affine_graph
from dag_feasibility.propagate import propagate


class State(object):
    """Class to hold incremental test state."""
    # pylint: disable=too-few-public-methods
    pass


@pytest.fixture(scope = 'session')
def state():
    """Return the :class:`State` object that holds incremental test state."""
    return State()


CHAIN_DECLARATION = {
    'name': 'chain',
    'nodes': [
        {'id': 0,
         'lo': [-1.0],
         'hi': [1.0],
         'constraint': {'A': [[1.0]], 'c': [-0.5]},
         'outputs': {1: {'A': [[1.0]]}}},
        {'id': 1,
         'lo': [-1.0],
         'hi': [1.0],
         'constraint': {'A': [[1.0]], 'B': [[1.0]]}},
    ],
}
"""Two nodes: ``v0 <= 0.5`` sends ``y = v0`` to node 1, which needs ``v1 + u <= 0``.
About 47% of ``[-1, 1]^2`` is jointly feasible."""

CHAIN_FEASIBLE_FRACTION = 0.46875


def chain_graph():
    return affine_graph(CHAIN_DECLARATION)


def open_graph():
    """Two nodes whose constraints always hold."""
    return affine_graph({
        'name': 'open',
        'nodes': [
            {'id': 0, 'lo': [0.0], 'hi': [1.0], 'constraint': {'c': [-1.0]},
             'outputs': {1: {'A': [[1.0]]}}},
            {'id': 1, 'lo': [0.0], 'hi': [1.0], 'constraint': {'c': [-1.0]}},
        ],
    })


def closed_graph():
    """Two nodes; node 0 is never feasible."""
    return affine_graph({
        'name': 'closed',
        'nodes': [
            {'id': 0, 'lo': [0.0], 'hi': [1.0], 'constraint': {'c': [1.0]},
             'outputs': {1: {'A': [[1.0]]}}},
            {'id': 1, 'lo': [0.0], 'hi': [1.0]},
        ],
    })


def coupled_graph():
    """Two nodes sharing one coupling parameter ``z`` in ``[0, 1]``.

    Node 0 needs ``v0 <= z`` and sends ``v0 + z``; node 1 needs ``u + v1 <= 1.5``.
    """
    def node0_constraint(v, u, z):
        return np.array([v[0] - z[0]])

    def node0_output(v, u, z):
        return np.array([v[0] + z[0]])

    def node1_constraint(v, u, z):
        return np.array([u[0] + v[0] - 1.5])

    nodes = [
        NodeSpec(0, Box.unit(1), node0_constraint, {1: node0_output}),
        NodeSpec(1, Box.unit(1), node1_constraint, input_dim = 1),
    ]
    return build_graph(nodes, [(0, 1, 1)], coupling_box = Box.unit(1), name = 'coupled')


def small_sampler(**overrides):
    settings = dict(target_feasible = 30, max_evaluations = 600, batch_size = 32)
    settings.update(overrides)
    return SamplerConfig(**settings)


def small_surrogate(**overrides):
    settings = dict(svm_grid = {'reg_c': [10.0], 'rbf_gamma': [4.0]},
                    krr_grid = {'rbf_gamma': [2.0], 'ridge_lambda': [1e-4]},
                    max_regression_points = 100)
    settings.update(overrides)
    return SurrogateConfig(**settings)


def small_nlp(**overrides):
    settings = dict(n_starts = 3, max_iter = 50)
    settings.update(overrides)
    return NlpConfig(**settings)


def run_small(graph, directions, seed = 0, **kwargs):
    return propagate(graph,
                     directions,
                     sampler_config = small_sampler(),
                     nlp_config = small_nlp(),
                     surrogate_config = small_surrogate(),
                     seed = seed,
                     n_sobol = 64,
                     **kwargs)


@pytest.fixture(scope = 'session')
def chain_forward():
    """A forward propagation of :func:`chain_graph`."""
    return run_small(chain_graph(), 'f')


@pytest.fixture(scope = 'session')
def chain_forward_backward():
    """An ``fb`` propagation of :func:`chain_graph`."""
    return run_small(chain_graph(), 'fb')


@pytest.fixture(scope = 'session')
def chain_backward():
    """A backward propagation of :func:`chain_graph`."""
    return run_small(chain_graph(), 'b')


@pytest.fixture(scope = 'session')
def coupled_forward():
    """A forward propagation of :func:`coupled_graph`."""
    return run_small(coupled_graph(), 'f')
