"""
***********************************
tests.test_surrogates
***********************************

Tests for classifier and regressor training, their derivatives, and balancing.

"""
import numpy as np
import pytest
from scipy.optimize import approx_fprime

from dag_feasibility import errors
from dag_feasibility.config import SurrogateConfig
from dag_feasibility.domains import Box, SampleSet
from dag_feasibility.samplers import sobol
from dag_feasibility.surrogates import (CvReport, SvmClassifier, KrrRegressor, svm_decision,
                                        svm_gradient, svm_classify, krr_predict, krr_jacobian,
                                        augment_balance, cap_training_set, train_svm, train_krr,
                                        surrogate_from_dict, fit_classifier)

SVM_GRID = {'reg_c': [10.0, 100.0], 'rbf_gamma': [4.0, 16.0]}
KRR_GRID = {'rbf_gamma': [8.0, 32.0], 'ridge_lambda': [1e-6, 1e-4]}


def disk_dataset(n_points = 256):
    points = sobol(2, n_points)
    labels = np.where(np.sum((points - 0.5)**2, axis = 1) <= 0.09, -1, 1)
    return SampleSet(points, labels, n_points, [('v0', 2)])


def unbalanced_dataset():
    points = np.linspace(0.0, 1.0, 10).reshape(-1, 1)
    labels = [-1, -1, 1, 1, 1, 1, 1, 1, 1, 1]
    return SampleSet(points, labels, 10, [('v0', 1)], metadata = {'policy': 'x'})


@pytest.fixture(scope = 'module')
def disk_classifier():
    return train_svm(disk_dataset(), SVM_GRID, k_folds = 2, seed = 0)


@pytest.fixture(scope = 'module')
def sine_regressor():
    inputs = np.linspace(0.0, 1.0, 40)
    outputs = np.sin(2 * np.pi * inputs)
    return train_krr(inputs, outputs, KRR_GRID, k_folds = 2, seed = 0)


def test_train_svm(disk_classifier):
    classifier, report = disk_classifier
    assert report.metric == 'accuracy'
    assert len(report.fold_scores) == 2
    assert report.cv_score >= 0.85
    assert report.final_train_metric >= 0.9
    assert report.chosen_hypers['reg_c'] in SVM_GRID['reg_c']
    assert report.chosen_hypers['rbf_gamma'] in SVM_GRID['rbf_gamma']
    assert len(report.grid_scores) == 4
    assert classifier.dim == 2

    assert svm_decision(classifier, [0.5, 0.5]) <= 0
    assert svm_decision(classifier, [0.02, 0.98]) > 0
    values = svm_decision(classifier, [[0.5, 0.5], [0.02, 0.98]])
    assert values.shape == (2,)
    assert svm_classify(classifier, [[0.5, 0.5], [0.02, 0.98]]).tolist() == [-1, 1]


@pytest.mark.parametrize('x', [
    [0.4, 0.6],
    [0.75, 0.3],
    [0.1, 0.1],
])
def test_svm_gradient(disk_classifier, x):
    classifier, _ = disk_classifier
    x = np.array(x)
    expected = approx_fprime(x, lambda point: svm_decision(classifier, point), 1e-7)
    result = svm_gradient(classifier, x)
    assert list(result) == pytest.approx(list(expected), rel = 1e-3, abs = 1e-4)


def test_svm_decision_dimension_mismatch(disk_classifier):
    classifier, _ = disk_classifier
    with pytest.raises(errors.DimensionMismatchError):
        svm_decision(classifier, [0.5])


def test_train_svm_single_class():
    dataset = SampleSet(np.zeros((4, 1)), [-1, -1, -1, -1], 4, [('v0', 1)])
    with pytest.raises(errors.SingleClassDatasetError):
        train_svm(dataset, SVM_GRID)


def test_SvmClassifier_round_trip(disk_classifier):
    classifier, report = disk_classifier
    restored = SvmClassifier.from_dict(classifier.to_dict())
    assert svm_decision(restored, [0.3, 0.4]) == pytest.approx(svm_decision(classifier,
                                                                            [0.3, 0.4]))
    assert isinstance(surrogate_from_dict(classifier.to_dict()), SvmClassifier)
    assert CvReport.from_dict(report.to_dict()).chosen_hypers == report.chosen_hypers

    with pytest.raises(ValueError):
        surrogate_from_dict({'type': 'tree'})


def test_SvmClassifier_constant():
    classifier = SvmClassifier.constant(3, value = -1.0)
    assert classifier.is_constant
    assert svm_decision(classifier, [0.1, 5.0, -2.0]) == -1.0
    assert list(svm_gradient(classifier, [0.1, 5.0, -2.0])) == [0.0, 0.0, 0.0]


def test_train_krr(sine_regressor):
    regressor, report = sine_regressor
    assert report.metric == 'mse'
    assert len(report.fold_scores) == 2
    assert report.final_train_metric < 0.01
    assert regressor.dim == 1
    assert regressor.output_dim == 1

    for x in (0.13, 0.33, 0.71):
        assert krr_predict(regressor, [x])[0] == pytest.approx(np.sin(2 * np.pi * x),
                                                               abs = 0.05)
    assert krr_predict(regressor, [[0.2], [0.4], [0.6]]).shape == (3, 1)


@pytest.mark.parametrize('x', [0.13, 0.5, 0.87])
def test_krr_jacobian(sine_regressor, x):
    regressor, _ = sine_regressor
    expected = approx_fprime(np.array([x]), lambda point: krr_predict(regressor, point)[0],
                             1e-7)
    result = krr_jacobian(regressor, [x])
    assert result.shape == (1, 1)
    assert result[0, 0] == pytest.approx(expected[0], rel = 1e-3, abs = 1e-3)


def test_train_krr_multiple_outputs():
    inputs = sobol(2, 32)
    outputs = np.column_stack([inputs[:, 0] + inputs[:, 1], inputs[:, 0] * inputs[:, 1]])
    regressor, _ = train_krr(inputs, outputs, KRR_GRID, k_folds = 2, seed = 4)
    assert regressor.output_dim == 2
    assert list(krr_predict(regressor, [0.4, 0.5])) == pytest.approx([0.9, 0.2], abs = 0.08)
    assert krr_jacobian(regressor, [0.4, 0.5]).shape == (2, 2)

    restored = KrrRegressor.from_dict(regressor.to_dict())
    assert list(krr_predict(restored, [0.4, 0.5])) == \
        pytest.approx(list(krr_predict(regressor, [0.4, 0.5])))


@pytest.mark.parametrize('n_points, k_folds, error', [
    (4, 2, None),
    (3, 2, ValueError),
    (5, 3, ValueError),
])
def test_train_krr_minimum_points(n_points, k_folds, error):
    inputs = np.linspace(0.0, 1.0, n_points)
    outputs = 2.0 * inputs
    if not error:
        result = train_krr(inputs, outputs, KRR_GRID, k_folds = k_folds)
        assert result[0].dim == 1
    else:
        with pytest.raises(error):
            result = train_krr(inputs, outputs, KRR_GRID, k_folds = k_folds)


def test_augment_balance():
    dataset = unbalanced_dataset()
    result = augment_balance(dataset, jitter_fraction = 0.01, seed = 0, box = Box.unit(1))
    assert result.size == 16
    assert result.n_feasible == 8
    assert np.array_equal(result.points[:10], dataset.points)
    assert np.array_equal(result.labels[:10], dataset.labels)
    assert np.all(result.labels[10:] == -1)
    assert np.all((result.points >= 0) & (result.points <= 1))
    distance = np.min(np.abs(result.points[10:] - [[0.0, 1.0 / 9.0]]), axis = 1)
    assert np.all(distance < 0.05)
    assert result.metadata['augmented'] == 6
    assert result.metadata['policy'] == 'x'

    again = augment_balance(dataset, jitter_fraction = 0.01, seed = 0, box = Box.unit(1))
    assert np.array_equal(again.points, result.points)


def test_augment_balance_balanced_and_single_class():
    balanced = SampleSet(np.zeros((2, 1)), [-1, 1], 2, [('v0', 1)])
    assert augment_balance(balanced) is balanced

    single = SampleSet(np.zeros((2, 1)), [1, 1], 2, [('v0', 1)])
    with pytest.raises(errors.SingleClassDatasetError):
        augment_balance(single)


def test_cap_training_set():
    points = np.arange(100, dtype = float).reshape(-1, 1)
    labels = np.where(np.arange(100) % 5 == 0, -1, 1)
    dataset = SampleSet(points, labels, 100, [('v0', 1)])

    result = cap_training_set(dataset, 40, seed = 2)
    assert result.size == 40
    assert result.n_feasible == 20
    assert np.all(np.diff(result.points[:, 0]) > 0)
    assert cap_training_set(dataset, 200) is dataset


def test_fit_classifier_constant():
    samples = SampleSet(np.zeros((3, 2)), [-1, -1, -1], 3, [('v0', 2)])
    classifier, report = fit_classifier(samples)
    assert classifier.is_constant
    assert svm_decision(classifier, [0.3, 0.3]) == -1.0
    assert report.fold_scores == []
    assert np.isnan(report.cv_score)
    assert report.final_train_metric == 1.0

    infeasible = SampleSet(np.zeros((3, 2)), [1, 1, 1], 3, [('v0', 2)])
    classifier, _ = fit_classifier(infeasible)
    assert svm_decision(classifier, [0.3, 0.3]) == 1.0


def test_fit_classifier():
    config = SurrogateConfig(svm_grid = {'reg_c': [10.0], 'rbf_gamma': [4.0]},
                             max_training_points = 100)
    classifier, report = fit_classifier(disk_dataset(), config, seed = 1, box = Box.unit(2))
    assert report.chosen_hypers == {'reg_c': 10.0, 'rbf_gamma': 4.0}
    assert svm_decision(classifier, [0.5, 0.5]) <= 0
    assert report.cv_score >= 0.8


def test_CvReport():
    report = CvReport('accuracy', [], {}, 1.0)
    assert np.isnan(report.cv_score)
    assert report.fold_accuracies == []

    report = CvReport('mse', [0.1, 0.3], {'rbf_gamma': 2.0}, 0.05)
    assert report.cv_score == pytest.approx(0.2)
    assert report.fold_mses == [0.1, 0.3]
    assert report.fold_accuracies == []
