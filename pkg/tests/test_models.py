"""
***********************************
tests.test_models
***********************************

Tests for the built-in case studies, the brute-force oracle, and the approximator SIP.

"""
import math

import numpy as np
import pytest

from dag_feasibility import errors
from dag_feasibility.config import NlpConfig
from dag_feasibility.domains import Box, SampleSet
from dag_feasibility.samplers import sobol, scale_to_box
from dag_feasibility.surrogates import train_svm
from dag_feasibility.models import (affine_graph, linear_example_graph, arrhenius,
                                    rk4_integrate, ReactorParams, reactor_graph,
                                    nonconvex_target, approximator_graph, brute_force_oracle,
                                    sip_solve, sip_boxes, get_case, CASES, SipResult,
                                    NARROW_LINEAR_OFFSET)

from tests.fixtures import chain_graph, coupled_graph, CHAIN_FEASIBLE_FRACTION


@pytest.mark.parametrize('declaration, error', [
    ({'name': 'one', 'nodes': [{'id': 0, 'lo': [0.0], 'hi': [1.0]}]}, None),
    ({'nodes': [{'id': 0, 'lo': [0.0], 'hi': [1.0], 'outputs': {1: {'c': [0.0]}}},
                {'id': 1, 'lo': [0.0], 'hi': [1.0]}]}, None),
    ({'nodes': [{'id': 0, 'lo': [0.0], 'hi': [1.0], 'outputs': {3: {'c': [0.0]}}}]},
     errors.GraphStructureError),
    ({'nodes': [{'id': 0, 'lo': [0.0], 'hi': [1.0], 'constraint': {'A': [[1.0, 1.0]]}}]},
     errors.DimensionMismatchError),
    ({'nodes': [{'id': 0, 'lo': [0.0], 'hi': [1.0], 'constraint': {'B': []}}]}, ValueError),
    ({'nodes': []}, ValueError),
])
def test_affine_graph(declaration, error):
    if not error:
        result = affine_graph(declaration)
        assert result.name == declaration.get('name', 'affine')
        assert result.n_nodes == len(declaration['nodes'])
    else:
        with pytest.raises(error):
            result = affine_graph(declaration)


def test_affine_graph_without_constraint():
    graph = affine_graph({'nodes': [{'id': 0, 'lo': [0.0], 'hi': [1.0]}]})
    assert graph.evaluate_node(0, [0.5], []).constraints.size == 0


def test_linear_example_graph():
    graph = linear_example_graph()
    assert graph.name == 'linear5'
    assert graph.joint_box().dim == 10
    assert [edge.key for edge in graph.edges] == [(0, 2), (1, 2), (2, 3), (2, 4)]

    result = graph.evaluate_forward(np.zeros(10))
    assert len(result.constraints) == 5
    assert all(np.all(values == 0) for values in result.constraints.values())

    narrow = linear_example_graph(offset = NARROW_LINEAR_OFFSET)
    result = narrow.evaluate_forward(np.zeros(10))
    assert list(result.constraints[0]) == pytest.approx([0.3])


@pytest.mark.parametrize('offset, expected', [
    (0.0, 0.5),
    (NARROW_LINEAR_OFFSET, (2.0 - NARROW_LINEAR_OFFSET)**2 / 8.0),
])
def test_linear_example_first_node_area(offset, expected):
    graph = linear_example_graph(offset = offset)
    points = scale_to_box(sobol(2, 4096, seed = 1), graph.node(0).param_box)
    inside = [np.all(graph.evaluate_node(0, point, []).constraints <= 0)
              for point in points]
    assert np.mean(inside) == pytest.approx(expected, abs = 0.01)



def test_arrhenius():
    assert arrhenius(0.5, 5.0, 300.0) == pytest.approx(0.06735, rel = 1e-3)
    assert arrhenius(2.0, 0.0, 450.0) == pytest.approx(2.0)
    with pytest.raises(errors.NonpositiveTemperatureError):
        arrhenius(0.5, 5.0, 0.0)
    with pytest.raises(errors.NonpositiveTemperatureError):
        arrhenius(0.5, 5.0, -10.0)


def test_rk4_integrate():
    result = rk4_integrate(lambda t, x: -x, [1.0], 1.0)
    assert result[0] == pytest.approx(math.exp(-1.0), abs = 1e-8)

    result = rk4_integrate(lambda t, x: np.array([1.0, 2.0 * t]), [0.0, 0.0], 2.0,
                           n_steps = 4)
    assert list(result) == pytest.approx([2.0, 4.0])

    with pytest.raises(errors.NonFiniteStateError):
        rk4_integrate(lambda t, x: x**2, [1.0], 10.0, n_steps = 10)


@pytest.mark.parametrize('params', [ReactorParams.published(), ReactorParams.calibrated()])
def test_reactor_mass_balance(params):
    for reactor in (0, 1):
        result = params.endpoint(reactor, 300.0, 500.0, 2.0, 0.0)
        assert result[0] + 2.0 * result[1] + 2.0 * result[2] == pytest.approx(2.0, rel = 1e-6)
        assert np.all(result >= -1e-9)


def test_ReactorParams():
    params = ReactorParams.published()
    assert params.name == 'published'
    assert params.param_box == Box([300.0, 300.0], [900.0, 700.0])
    assert ReactorParams.from_dict(params.to_dict()).to_dict() == params.to_dict()

    calibrated = ReactorParams.calibrated()
    assert calibrated.bound_c == 0.06
    assert calibrated.rates(0, 400.0)[0] == pytest.approx(arrhenius(0.50, 5.00, 400.0))

    with pytest.raises(errors.NonpositiveTemperatureError):
        ReactorParams(temperature_box = (0.0, 700.0))
    with pytest.raises(ValueError):
        ReactorParams(k0 = [[0.0, 1.0], [1.0, 1.0]])


def test_reactor_graph():
    graph = reactor_graph(ReactorParams.calibrated())
    assert graph.name == 'reactors'
    assert reactor_graph().name == 'reactors-published'
    assert graph.n_nodes == 2
    assert graph.input_dim(1) == 2
    assert graph.node(0).name == 'reactor1'

    evaluation = graph.evaluate_node(0, [300.0, 500.0], [])
    assert evaluation.constraints.shape == (1,)
    assert evaluation.outputs[1].shape == (2,)


@pytest.mark.parametrize('z, expected', [
    ([1.0, 1.0], -1.0),
    ([1.0, 0.0], 0.0),
    ([0.0, 0.0], 0.0),
    ([0.5, 0.2], 0.125 - 0.25 + 0.008 - 0.04 - 0.1),
])
def test_nonconvex_target(z, expected):
    assert nonconvex_target(z) == pytest.approx(expected)


def test_approximator_graph():
    graph = approximator_graph()
    assert graph.name == 'funcapprox'
    assert graph.coupling_roles == [('z', 2), ('eps', 1)]
    assert graph.joint_box().dim == 13
    assert [graph.subproblem_dim(node) for node in range(6)] == [4, 5, 5, 5, 6, 8]
    assert graph.in_neighbours(5) == (0, 1, 2, 3, 4)


def test_approximator_graph_exact_fit():
    """``c = 0``, ``T = S = 0``, ``p = 0`` and ``L = 0`` make every term vanish, so node 5
    is feasible wherever the target is within ``eps`` of zero."""
    graph = approximator_graph()
    result = graph.evaluate_forward(np.zeros(10), z = [1.0, 0.0, 0.1])
    assert list(result.constraints[5]) == pytest.approx([-0.1])
    result = graph.evaluate_forward(np.zeros(10), z = [1.0, 0.3, 0.1])
    assert result.constraints[5][0] > 0


def test_brute_force_oracle():
    result = brute_force_oracle(chain_graph(), 256)
    assert isinstance(result, SampleSet)
    assert result.size == 256
    assert result.n_evaluations == 512
    assert result.tags == ['v0', 'v1']
    fraction = result.n_feasible / result.size
    assert abs(fraction - CHAIN_FEASIBLE_FRACTION) < 0.05

    threaded = brute_force_oracle(chain_graph(), 256, workers = 2)
    assert np.array_equal(threaded.labels, result.labels)


def test_brute_force_oracle_coupled():
    result = brute_force_oracle(coupled_graph(), 64, seed = 3)
    assert result.tags == ['v0', 'v1', 'z']
    feasible = result.points[result.labels == -1]
    assert np.all(feasible[:, 0] <= feasible[:, 2])


def test_brute_force_oracle_dimension_guard():
    wide = affine_graph({'nodes': [{'id': 0, 'lo': [0.0] * 15, 'hi': [1.0] * 15,
                                    'constraint': {'c': [-1.0]}}]})
    with pytest.raises(errors.DimensionGuardError):
        brute_force_oracle(wide, 16)


def test_sip_boxes():
    v_box, z_box, eps_box = sip_boxes(approximator_graph())
    assert v_box.dim == 10
    assert z_box == Box([-0.5, 0.0], [1.0, 0.3])
    assert eps_box == Box([0.0], [0.25])

    with pytest.raises(errors.MissingCouplingBoxError):
        sip_boxes(linear_example_graph())
    with pytest.raises(errors.UnknownRoleError):
        sip_boxes(coupled_graph())


@pytest.fixture(scope = 'module')
def band_classifier():
    """Feasible iff ``eps >= 0.5 z + 0.2`` over ``[v | z | eps]`` in the unit cube."""
    points = sobol(3, 512)
    labels = np.where(points[:, 2] >= 0.5 * points[:, 1] + 0.2, -1, 1)
    dataset = SampleSet(points, labels, 512, [('v', 1), ('z', 1), ('eps', 1)])
    classifier, _ = train_svm(dataset, {'reg_c': [100.0], 'rbf_gamma': [4.0]}, seed = 0)
    return classifier


def test_sip_solve(band_classifier):
    boxes = (Box.unit(1), Box.unit(1), Box.unit(1))
    result = sip_solve(band_classifier, boxes, NlpConfig(n_starts = 4, max_iter = 100))
    assert isinstance(result, SipResult)
    assert 0.55 < result.eps_star < 0.85
    assert result.max_violation <= 1e-3
    assert 1 <= result.iterations <= 25
    assert len(result.discretization_points) >= 3
    assert result.to_dict()['eps_star'] == result.eps_star


def test_sip_solve_dimension_checks(band_classifier):
    with pytest.raises(errors.DimensionMismatchError):
        sip_solve(band_classifier, (Box.unit(1), Box.unit(1), Box.unit(2)))
    with pytest.raises(errors.DimensionMismatchError):
        sip_solve(band_classifier, (Box.unit(2), Box.unit(1), Box.unit(1)))


@pytest.mark.parametrize('name, error', [
    ('linear5', None),
    ('linear5-narrow', None),
    ('reactors', None),
    ('reactors-published', None),
    ('funcapprox', None),
    ('distillation', errors.UnknownCaseError),
    (None, errors.UnknownCaseError),
])
def test_get_case(name, error):
    if not error:
        result = get_case(name)
        assert result.name == name
        assert name in CASES
    else:
        with pytest.raises(error):
            result = get_case(name)
