"""
***********************************
tests.test_optim
***********************************

Tests for box-constrained local minimization, multi-start, and the penalty wrapper.

"""
import numpy as np
import pytest

from dag_feasibility import errors
from dag_feasibility.domains import Box
from dag_feasibility.optim import box_minimize, multistart_minimize, penalty_objective


def quadratic(centre):
    centre = np.asarray(centre, dtype = float)

    def objective(x):
        diff = np.asarray(x) - centre
        return float(diff @ diff), 2.0 * diff

    return objective


def double_well(x):
    """Two local minima on ``[-2, 2]``; the one near ``-1`` is lower."""
    x = float(x[0])
    return (x**2 - 1)**2 + 0.3 * x, np.array([4 * x * (x**2 - 1) + 0.3])


@pytest.mark.parametrize('centre, x0, expected, expected_f', [
    ([0.3, 0.7], [0.9, 0.1], [0.3, 0.7], 0.0),
    ([2.0, 0.5], [0.1, 0.1], [1.0, 0.5], 1.0),
    ([-1.0, -1.0], [0.5, 0.5], [0.0, 0.0], 2.0),
])
def test_box_minimize(centre, x0, expected, expected_f):
    result = box_minimize(quadratic(centre), Box.unit(2), x0)
    assert list(result.x_star) == pytest.approx(expected, abs = 1e-6)
    assert result.f_star == pytest.approx(expected_f, abs = 1e-8)
    assert result.converged is True
    assert np.all((result.x_star >= 0) & (result.x_star <= 1))


def test_box_minimize_clips_start():
    result = box_minimize(quadratic([0.5]), Box.unit(1), [7.0])
    assert result.x_star[0] == pytest.approx(0.5, abs = 1e-6)


def test_box_minimize_iteration_cap():
    result = box_minimize(double_well, Box([-2.0], [2.0]), [1.9], max_iter = 1)
    assert result.iterations <= 1
    assert result.converged is False
    assert -2.0 <= result.x_star[0] <= 2.0


def test_box_minimize_dimension_mismatch():
    with pytest.raises(errors.DimensionMismatchError):
        box_minimize(quadratic([0.5, 0.5]), Box.unit(2), [0.5])


def test_box_minimize_without_dimensions():
    result = box_minimize(lambda x: (5.0, np.zeros(0)), Box.empty(), [])
    assert result.f_star == 5.0
    assert result.converged is True
    assert result.iterations == 0
    assert result.x_star.size == 0


def test_multistart_finds_global_minimum():
    box = Box([-2.0], [2.0])
    local = box_minimize(double_well, box, [1.5])
    assert local.x_star[0] > 0

    result = multistart_minimize(double_well, box, n_starts = 10, seed = 1)
    assert result.x_star[0] < 0
    assert result.f_star < local.f_star
    assert result.f_star < 0


def test_multistart_stop_when():
    calls = []

    def stop_when(result):
        calls.append(result)
        return result.f_star < 0

    result = multistart_minimize(double_well, Box([-2.0], [2.0]), n_starts = 10,
                                 seed = 1, stop_when = stop_when)
    assert result.f_star < 0
    assert calls[-1] is result
    assert all(call.f_star >= 0 for call in calls[:-1])


def test_multistart_is_deterministic():
    box = Box([-2.0, -2.0], [2.0, 2.0])
    objective = quadratic([0.25, -1.5])
    first = multistart_minimize(objective, box, n_starts = 4, seed = 9)
    second = multistart_minimize(objective, box, n_starts = 4, seed = 9)
    assert np.array_equal(first.x_star, second.x_star)


def test_penalty_objective():
    def flat(x):
        return 0.0, np.zeros(2)

    def on_line(x):
        return np.array([x[0] + x[1] - 1.0]), np.array([[1.0, 1.0]])

    objective = penalty_objective(flat, on_line, weight = 10.0)
    value, gradient = objective(np.array([1.0, 1.0]))
    assert value == pytest.approx(10.0)
    assert list(gradient) == pytest.approx([20.0, 20.0])

    result = box_minimize(penalty_objective(quadratic([0.0, 0.0]), on_line, weight = 1e3),
                          Box.unit(2),
                          [0.9, 0.9])
    assert result.x_star.sum() == pytest.approx(1.0, abs = 1e-3)
    assert list(result.x_star) == pytest.approx([0.5, 0.5], abs = 1e-3)


@pytest.mark.parametrize('weight, error', [
    (1.0, None),
    (0.0, ValueError),
    (-5.0, ValueError),
])
def test_penalty_objective_weight(weight, error):
    def flat(x):
        return 0.0, np.zeros(1)

    def residual(x):
        return np.array([x[0]]), np.array([[1.0]])

    if not error:
        result = penalty_objective(flat, residual, weight = weight)
        assert result(np.array([2.0]))[0] == pytest.approx(4.0 * weight)
    else:
        with pytest.raises(error):
            result = penalty_objective(flat, residual, weight = weight)
