"""
***********************************
tests.test_reconstruct
***********************************

Tests for joint reconstruction, the simultaneous baseline, and run comparison.

"""
import os

import numpy as np
import pytest

from dag_feasibility import errors
from dag_feasibility.domains import SampleSet
from dag_feasibility.models import linear_example_graph, brute_force_oracle
from dag_feasibility.samplers import EvalCounter
from dag_feasibility.reconstruct import (ReconstructionResult, evaluate_composite,
                                         composite_feasibility, project_joint, reconstruct,
                                         simultaneous, compare_runs,
                                         outer_approximation_fraction)

from tests.fixtures import chain_graph, open_graph, coupled_graph, small_sampler
from tests.fixtures import chain_forward, coupled_forward

LINEAR_FEASIBLE_POINT = [-1.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def chain_truly_feasible(points):
    points = np.atleast_2d(points)
    return np.all((points[:, 0] <= 0.5) & (points[:, 0] + points[:, 1] <= 0))


def stub_result(labels, constituent_evals, graph_name = 'chain', source = 'simultaneous'):
    samples = SampleSet(np.zeros((len(labels), 1)), labels, constituent_evals, [('v0', 1)])
    return ReconstructionResult(samples,
                                EvalCounter(constituent_evals = constituent_evals),
                                source,
                                graph_name)


def test_evaluate_composite():
    result = evaluate_composite(chain_graph(), [0.2, -0.5])
    assert list(result.constraints[0]) == pytest.approx([-0.3])
    assert list(result.constraints[1]) == pytest.approx([-0.3])
    assert list(result.inputs[1]) == pytest.approx([0.2])
    assert result.n_evaluations == 2


@pytest.mark.parametrize('point, short_circuit, expected, expected_evals', [
    (LINEAR_FEASIBLE_POINT, True, True, 5),
    (np.zeros(10), True, True, 5),
    ([1.0, -1.0] + [0.0] * 8, True, False, 1),
    ([1.0, -1.0] + [0.0] * 8, False, False, 5),
])
def test_composite_feasibility(point, short_circuit, expected, expected_evals):
    feasible, evaluations = composite_feasibility(linear_example_graph(), point,
                                                  short_circuit = short_circuit)
    assert feasible is expected
    assert evaluations == expected_evals


def test_project_joint():
    graph = chain_graph()
    assert project_joint(graph, 1, [0.2, -0.5]).tolist() == [[-0.5, 0.2]]
    assert project_joint(graph, 0, [[0.2, -0.5], [0.4, 0.1]]).tolist() == [[0.2], [0.4]]

    coupled = project_joint(coupled_graph(), 1, [0.2, 0.3], z = [0.5])
    assert list(coupled[0]) == pytest.approx([0.3, 0.7, 0.5])


def test_reconstruct(chain_forward):
    result = reconstruct(chain_graph(), chain_forward, target = 50, budget = 2000)
    assert isinstance(result, ReconstructionResult)
    assert result.source == 'decomposition'
    assert result.graph_name == 'chain'
    assert result.directions == 'f'
    assert result.seed == chain_forward.seed
    assert result.n_feasible == 50
    assert result.joint_samples.tags == ['v0', 'v1']

    feasible = result.joint_samples.feasible().points
    assert chain_truly_feasible(feasible)

    stage = result.joint_samples.n_evaluations
    assert result.counter.constituent_evals == \
        chain_forward.counter.constituent_evals + stage
    assert result.acceptance_ratio == pytest.approx(50 / result.counter.constituent_evals)
    assert result.draw_acceptance == pytest.approx(50 / result.joint_samples.size)

    again = reconstruct(chain_graph(), chain_forward, target = 50, budget = 2000)
    assert np.array_equal(again.joint_samples.points, result.joint_samples.points)


def test_reconstruct_draws_from_node_pools(chain_forward):
    result = reconstruct(chain_graph(), chain_forward, target = 20, budget = 2000, seed = 5)
    pool0 = set(chain_forward.node_state(0).samples.feasible().points[:, 0].tolist())
    pool1 = set(chain_forward.node_state(1).samples.feasible().points[:, 0].tolist())
    assert set(result.joint_samples.points[:, 0].tolist()) <= pool0
    assert set(result.joint_samples.points[:, 1].tolist()) <= pool1


def test_reconstruct_adaptive(chain_forward):
    result = reconstruct(chain_graph(), chain_forward, target = 50, budget = 2000,
                         adaptive = True, sampler_config = small_sampler())
    assert result.n_feasible == 50
    assert result.joint_samples.metadata['policy'] == 'adaptive_mixture'
    assert chain_truly_feasible(result.joint_samples.feasible().points)


def test_reconstruct_graph_mismatch(chain_forward):
    with pytest.raises(errors.GraphMismatchError):
        reconstruct(open_graph(), chain_forward)


def test_reconstruct_coupled(coupled_forward):
    result = reconstruct(coupled_graph(), coupled_forward, target = 20, budget = 2000)
    assert result.joint_samples.tags == ['v0', 'v1', 'z']
    assert result.n_feasible == 20

    feasible = result.joint_samples.feasible().points
    v0, v1, z = feasible[:, 0], feasible[:, 1], feasible[:, 2]
    assert np.all(v0 <= z)
    assert np.all(v0 + z + v1 <= 1.5)


def test_simultaneous():
    counter = EvalCounter(constituent_evals = 7)
    result = simultaneous(chain_graph(), small_sampler(), counter = counter)
    assert result.source == 'simultaneous'
    assert result.directions is None
    assert result.n_feasible == 30
    assert chain_truly_feasible(result.joint_samples.feasible().points)

    assert result.counter.constituent_evals == result.joint_samples.n_evaluations
    assert counter.constituent_evals == 7 + result.counter.constituent_evals
    assert result.joint_samples.size <= result.counter.constituent_evals <= \
        2 * result.joint_samples.size
    assert result.acceptance_ratio == pytest.approx(30 / result.counter.constituent_evals)


def test_compare_runs(chain_forward):
    decomposition = reconstruct(chain_graph(), chain_forward, target = 30, budget = 2000)
    baseline = simultaneous(chain_graph(), small_sampler())
    result = compare_runs(decomposition, baseline)
    assert result['graph'] == 'chain'
    assert result['a']['source'] == 'decomposition'
    assert result['b']['source'] == 'simultaneous'
    assert result['ar_ratio'] == pytest.approx(decomposition.acceptance_ratio /
                                               baseline.acceptance_ratio)
    assert result['feasible_ratio'] == pytest.approx(1.0)


@pytest.mark.parametrize('a_labels, b_labels, expected', [
    ([-1], [1], 'inf'),
    ([1], [1], 'nan'),
    ([-1], [-1], 1.0),
])
def test_compare_runs_zero_denominator(a_labels, b_labels, expected):
    result = compare_runs(stub_result(a_labels, 10), stub_result(b_labels, 10))
    assert result['ar_ratio'] == expected


def test_compare_runs_graph_mismatch():
    with pytest.raises(errors.GraphMismatchError):
        compare_runs(stub_result([-1], 10), stub_result([-1], 10, graph_name = 'open'))


@pytest.mark.parametrize('joint_samples, source, error', [
    (SampleSet([[0.0]], [-1], 1, [('v0', 1)]), 'decomposition', None),
    (SampleSet([[0.0]], [-1], 1, [('v0', 1)]), 'oracle', ValueError),
    ([[0.0]], 'simultaneous', ValueError),
])
def test_ReconstructionResult(joint_samples, source, error):
    if not error:
        result = ReconstructionResult(joint_samples, EvalCounter(constituent_evals = 4), source,
                                      'chain')
        assert result.acceptance_ratio == pytest.approx(0.25)
    else:
        with pytest.raises(error):
            result = ReconstructionResult(joint_samples, EvalCounter(), source, 'chain')


def test_ReconstructionResult_round_trip(chain_forward, tmp_path):
    result = reconstruct(chain_graph(), chain_forward, target = 20, budget = 2000)
    path = str(tmp_path / 'reconstruction')
    assert result.to_directory(path) == path
    assert os.path.exists(os.path.join(path, 'joint_samples.csv'))
    assert os.path.exists(os.path.join(path, 'metrics.json'))

    loaded = ReconstructionResult.from_directory(path)
    assert loaded.source == result.source
    assert loaded.graph_name == 'chain'
    assert loaded.directions == 'f'
    assert loaded.counter == result.counter
    assert loaded.n_feasible == result.n_feasible
    assert loaded.acceptance_ratio == pytest.approx(result.acceptance_ratio)
    assert loaded.draw_acceptance == pytest.approx(result.draw_acceptance)

    with pytest.raises(FileNotFoundError):
        ReconstructionResult.from_directory(str(tmp_path / 'missing'))


def test_outer_approximation_fraction(chain_forward):
    oracle = brute_force_oracle(chain_graph(), 256)
    assert outer_approximation_fraction(chain_forward, oracle, 0) >= 0.7
    assert outer_approximation_fraction(chain_forward, oracle, 1) >= 0.6

    empty = SampleSet([[0.9, 0.9]], [1], 2, [('v0', 1), ('v1', 1)])
    with pytest.raises(errors.EmptyPointSetError):
        outer_approximation_fraction(chain_forward, empty, 0)
