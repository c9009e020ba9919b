"""
***********************************
tests.test_domains
***********************************

Tests for boxes, interval hulls, and labeled sample sets.

"""
import os

import numpy as np
import pytest

from dag_feasibility import errors
from dag_feasibility.domains import (Box, SampleSet, interval_hull, box_product, contains,
                                     project, HULL_FLOOR)


@pytest.mark.parametrize('lo, hi, error', [
    ([0.0, -1.0], [1.0, 1.0], None),
    ([], [], None),
    (0.5, 0.5, None),
    ([1.0], [0.0], ValueError),
    ([0.0, 0.0], [1.0], errors.DimensionMismatchError),
    ([0.0], [np.inf], ValueError),
    ([np.nan], [1.0], ValueError),
])
def test_Box(lo, hi, error):
    if not error:
        result = Box(lo, hi)
        assert result.dim == np.size(lo)
        assert np.all(result.width >= 0)
    else:
        with pytest.raises(error):
            result = Box(lo, hi)


def test_Box_is_immutable():
    box = Box([0.0], [1.0])
    with pytest.raises(ValueError):
        box.lo[0] = 2.0


def test_Box_empty_and_unit():
    assert Box.empty().dim == 0
    unit = Box.unit(3)
    assert np.array_equal(unit.lo, np.zeros(3))
    assert np.array_equal(unit.hi, np.ones(3))
    assert Box.from_dict(unit.to_dict()) == unit
    assert Box.from_dict(Box.empty().to_dict()) == Box.empty()


@pytest.mark.parametrize('points, inflation, expected_lo, expected_hi, error', [
    ([[0.1], [0.9]], 0.05, [0.08], [0.92], None),
    ([[0.1], [0.9]], 0.0, [0.1], [0.9], None),
    ([0.1, 0.9], 0.05, [0.08], [0.92], None),
    ([[0.0, 2.0], [1.0, 2.0]], 0.1, [-0.05, 2.0 - HULL_FLOOR], [1.05, 2.0 + HULL_FLOOR], None),
    ([[0.3]], 0.05, [0.3 - HULL_FLOOR], [0.3 + HULL_FLOOR], None),
    (np.zeros((0, 2)), 0.05, None, None, errors.EmptyPointSetError),
    ([[0.1], [0.9]], -0.1, None, None, ValueError),
])
def test_interval_hull(points, inflation, expected_lo, expected_hi, error):
    if not error:
        result = interval_hull(points, inflation)
        assert list(result.lo) == pytest.approx(expected_lo)
        assert list(result.hi) == pytest.approx(expected_hi)
    else:
        with pytest.raises(error):
            result = interval_hull(points, inflation)


def test_interval_hull_without_columns():
    assert interval_hull(np.zeros((5, 0))) == Box.empty()


def test_interval_hull_contains_points():
    points = np.random.default_rng(3).uniform(-2.0, 5.0, size = (50, 3))
    hull = interval_hull(points, 0.05)
    assert np.all(contains(hull, points))


def test_box_product():
    product = box_product([Box([0.0], [1.0]), Box.empty(), Box([-1.0, 2.0], [0.0, 3.0])])
    assert product.dim == 3
    assert list(product.lo) == [0.0, -1.0, 2.0]
    assert list(product.hi) == [1.0, 0.0, 3.0]

    with pytest.raises(ValueError):
        box_product([Box.unit(1), (0.0, 1.0)])


@pytest.mark.parametrize('point, expected, error', [
    ([0.0, 1.0], True, None),
    ([0.5, 0.5], True, None),
    ([1.0 + 1e-12, 0.5], False, None),
    ([[0.5, 0.5], [2.0, 0.5], [0.0, 0.0]], [True, False, True], None),
    ([0.5], None, errors.DimensionMismatchError),
])
def test_contains(point, expected, error):
    box = Box.unit(2)
    if not error:
        result = contains(box, point)
        if isinstance(expected, list):
            assert list(result) == expected
        else:
            assert result is expected
    else:
        with pytest.raises(error):
            result = contains(box, point)


def _sample_set():
    points = np.arange(12, dtype = float).reshape(4, 3)
    return SampleSet(points, [-1, 1, -1, 1], 9, [('v0', 2), ('z', 1)],
                     metadata = {'policy': 'sobol_rejection'})


@pytest.mark.parametrize('points, labels, n_evaluations, roles, error', [
    (np.zeros((2, 3)), [-1, 1], 2, [('v0', 2), ('z', 1)], None),
    (np.zeros((2, 3)), [-1, 1], 2, [('v5', 0), ('u0>5', 3)], None),
    (np.zeros((2, 3)), [-1, 1], 2, [('v0', 2)], errors.DimensionMismatchError),
    (np.zeros((2, 3)), [-1], 2, [('v0', 3)], errors.DimensionMismatchError),
    (np.zeros((2, 3)), [-1, 0], 2, [('v0', 3)], ValueError),
    (np.zeros((2, 3)), [-1, 1], 2, [('v0', 2), ('v0', 1)], ValueError),
    (np.zeros((2, 3)), [-1, 1], 1, [('v0', 3)], ValueError),
])
def test_SampleSet(points, labels, n_evaluations, roles, error):
    if not error:
        result = SampleSet(points, labels, n_evaluations, roles)
        assert result.size == len(labels)
        assert result.column_roles == roles
    else:
        with pytest.raises(error):
            result = SampleSet(points, labels, n_evaluations, roles)


def test_SampleSet_columns_and_feasible():
    samples = _sample_set()
    assert samples.n_feasible == 2
    assert samples.columns('z')[:, 0].tolist() == [2.0, 5.0, 8.0, 11.0]

    feasible = samples.feasible()
    assert feasible.size == 2
    assert feasible.n_evaluations == 9
    assert feasible.columns('v0').tolist() == [[0.0, 1.0], [6.0, 7.0]]

    with pytest.raises(errors.UnknownRoleError):
        samples.columns('u0>1')


def test_SampleSet_to_dataframe():
    df = _sample_set().to_dataframe()
    assert list(df.columns) == ['v0[0]', 'v0[1]', 'z[0]', 'label']
    assert df['label'].tolist() == [-1, 1, -1, 1]


def test_SampleSet_csv(tmp_path):
    samples = _sample_set()
    path = str(tmp_path / 'samples.csv')
    sidecar = samples.to_csv(path)
    assert os.path.exists(sidecar)

    loaded = SampleSet.from_csv(path)
    assert np.array_equal(loaded.points, samples.points)
    assert np.array_equal(loaded.labels, samples.labels)
    assert loaded.n_evaluations == 9
    assert loaded.column_roles == samples.column_roles
    assert loaded.metadata == samples.metadata

    with pytest.raises(FileNotFoundError):
        SampleSet.from_csv(str(tmp_path / 'missing.csv'))


@pytest.mark.parametrize('role_filter, expected_tags, error', [
    ('z', ['z'], None),
    (['z', 'v0'], ['v0', 'z'], None),
    (lambda tag: tag.startswith('v'), ['v0'], None),
    ('u0>1', None, errors.UnknownRoleError),
    (lambda tag: False, None, errors.UnknownRoleError),
])
def test_project(role_filter, expected_tags, error):
    samples = _sample_set()
    if not error:
        result = project(samples, role_filter)
        assert result.tags == expected_tags
        assert np.array_equal(result.labels, samples.labels)
        assert result.n_evaluations == samples.n_evaluations
    else:
        with pytest.raises(error):
            result = project(samples, role_filter)
