# -*- coding: utf-8 -*-
"""Feasibility classifiers and constituent-map regressors.

Both model types are radial-basis kernel expansions with analytic derivatives, so the
embedded subproblem solves in :mod:`dag_feasibility.propagate` can hand exact gradients to
L-BFGS-B. Training is delegated to scikit-learn (``SVC`` for the classifier, ``KernelRidge``
for the regressor); the fitted coefficients are then copied into the light-weight,
serializable objects defined here.

Inputs are rescaled internally to the unit box spanned by the training points. The scaling
is part of the model and is invisible at the interface: :func:`svm_decision`,
:func:`svm_gradient`, :func:`krr_predict` and :func:`krr_jacobian` all take and return
quantities in the caller's coordinates.
"""
import logging
import warnings

import numpy as np
from scipy.linalg import LinAlgWarning
from sklearn.exceptions import ConvergenceWarning
from sklearn.kernel_ridge import KernelRidge
from sklearn.model_selection import KFold, StratifiedKFold
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC
from validator_collection import validators

from dag_feasibility import errors
from dag_feasibility.config import SurrogateConfig
from dag_feasibility.domains import Box, SampleSet, FEASIBLE, INFEASIBLE, interval_hull
from dag_feasibility.samplers import derive_seed

logger = logging.getLogger(__name__)

SMO_TOLERANCE = 1e-3
RIDGE_FLOOR = 1e-10

DEFAULT_SVM_GRID = {'reg_c': [1.0, 10.0, 100.0], 'rbf_gamma': [1.0, 4.0, 16.0]}
DEFAULT_KRR_GRID = {'rbf_gamma': [0.5, 2.0, 8.0], 'ridge_lambda': [1e-6, 1e-4, 1e-2]}


def _training_frame(points):
    """Return the box used to rescale ``points`` to the unit cube (zero widths become 1)."""
    lo = points.min(axis = 0)
    width = points.max(axis = 0) - lo
    width[width == 0] = 1.0
    return Box(lo, lo + width)


def _scaling(input_box, dim):
    if input_box is None:
        return np.zeros(dim), np.ones(dim)
    width = np.where(input_box.width > 0, input_box.width, 1.0)
    return input_box.lo, width


def _as_inputs(x, dim):
    array = np.asarray(x, dtype = float)
    single = array.ndim <= 1
    array = array.reshape(1, -1) if single else array
    if array.ndim != 2 or array.shape[1] != dim:
        raise errors.DimensionMismatchError(f'expected inputs of dimension {dim}. '
                                            f'Was: {array.shape[-1]}')
    return array, single


def _rbf(scaled, centres, gamma):
    """Return ``(K, diff)`` with ``K[i, k] = exp(-gamma ||s_i - c_k||^2)``."""
    diff = scaled[:, None, :] - centres[None, :, :]
    return np.exp(-gamma * np.einsum('ikd,ikd->ik', diff, diff)), diff


def _grid_points(hyper_grid, first, second):
    hyper_grid = validators.dict(hyper_grid, allow_empty = False)
    for key in (first, second):
        if not hyper_grid.get(key):
            raise ValueError(f'hyper_grid needs a non-empty "{key}" list. Was: {hyper_grid}')
    return [(a, b)
            for a in sorted(float(x) for x in hyper_grid[first])
            for b in sorted(float(x) for x in hyper_grid[second])]


class CvReport(object):
    """Outcome of a k-fold grid search.

    ``fold_scores`` holds the per-fold scores of the chosen grid point: accuracies for a
    classifier, mean squared errors on standardized outputs for a regressor.
    """

    def __init__(self,
                 metric,
                 fold_scores,
                 chosen_hypers,
                 final_train_metric,
                 converged = True,
                 grid_scores = None):
        self._metric = validators.string(metric, allow_empty = False)
        self._fold_scores = [float(x) for x in fold_scores]
        self._chosen_hypers = dict(chosen_hypers)
        self._final_train_metric = float(final_train_metric)
        self._converged = bool(converged)
        self._grid_scores = list(grid_scores or [])

    @property
    def metric(self):
        """``'accuracy'`` or ``'mse'``.

        :rtype: :class:`str <python:str>`
        """
        return self._metric

    @property
    def fold_scores(self):
        """Per-fold scores of the selected grid point.

        :rtype: :class:`list <python:list>` of :class:`float <python:float>`
        """
        return list(self._fold_scores)

    @property
    def fold_accuracies(self):
        return self.fold_scores if self._metric == 'accuracy' else []

    @property
    def fold_mses(self):
        return self.fold_scores if self._metric == 'mse' else []

    @property
    def cv_score(self):
        """Mean of :meth:`fold_scores <CvReport.fold_scores>`, or ``nan`` without folds.

        :rtype: :class:`float <python:float>`
        """
        return float(np.mean(self._fold_scores)) if self._fold_scores else float('nan')

    @property
    def chosen_hypers(self):
        """Selected hyperparameters.

        :rtype: :class:`dict <python:dict>`
        """
        return dict(self._chosen_hypers)

    @property
    def final_train_metric(self):
        """Score of the model refitted on all data, re-evaluated on the training set.

        :rtype: :class:`float <python:float>`
        """
        return self._final_train_metric

    @property
    def converged(self):
        """``False`` if the final fit hit its iteration limit.

        :rtype: :class:`bool <python:bool>`
        """
        return self._converged

    @property
    def grid_scores(self):
        return list(self._grid_scores)

    def to_dict(self):
        return {
            'metric': self._metric,
            'fold_scores': self._fold_scores,
            'cv_score': self.cv_score,
            'chosen_hypers': self._chosen_hypers,
            'final_train_metric': self._final_train_metric,
            'converged': self._converged,
            'grid_scores': self._grid_scores,
        }

    @classmethod
    def from_dict(cls, as_dict):
        as_dict = validators.dict(as_dict, allow_empty = False)
        return cls(as_dict.get('metric', 'accuracy'),
                   as_dict.get('fold_scores', []),
                   as_dict.get('chosen_hypers', {}),
                   as_dict.get('final_train_metric', float('nan')),
                   converged = as_dict.get('converged', True),
                   grid_scores = as_dict.get('grid_scores'))

    def __repr__(self):
        return (f'CvReport(metric={self._metric!r}, cv_score={self.cv_score:.4g}, '
                f'chosen_hypers={self._chosen_hypers})')


class SvmClassifier(object):
    """Soft-margin RBF support vector classifier.

    The decision value at ``x`` is ``sum_k dual_coefs[k] * exp(-rbf_gamma * ||s(x) - x_k||^2)
    + bias`` where ``s`` rescales ``x`` by ``input_box`` and ``x_k`` are the (rescaled)
    support points. A decision value ``<= 0`` means *feasible*.
    """

    def __init__(self,
                 support_points,
                 dual_coefs,
                 bias,
                 rbf_gamma,
                 reg_c = 1.0,
                 input_box = None,
                 converged = True):
        support_points = np.asarray(support_points, dtype = float)
        if support_points.ndim == 1:
            support_points = support_points.reshape(-1, 1)
        dual_coefs = np.asarray(dual_coefs, dtype = float).reshape(-1)
        if support_points.shape[0] < 1:
            raise ValueError('a classifier needs at least one support point')
        if dual_coefs.size != support_points.shape[0]:
            raise errors.DimensionMismatchError(f'expected {support_points.shape[0]} dual '
                                                f'coefficients. Was: {dual_coefs.size}')
        if input_box is not None and input_box.dim != support_points.shape[1]:
            raise errors.DimensionMismatchError('input_box does not match the support points')

        support_points.setflags(write = False)
        dual_coefs.setflags(write = False)
        self._support_points = support_points
        self._dual_coefs = dual_coefs
        self._bias = float(bias)
        self._rbf_gamma = validators.float(rbf_gamma, minimum = 0)
        self._reg_c = validators.float(reg_c, minimum = 0)
        self._input_box = input_box
        self._converged = bool(converged)

    @classmethod
    def constant(cls, dim, value = -1.0):
        """Return a classifier whose decision value is ``value`` everywhere.

        Used when every sampled point of a subproblem has the same label.

        :rtype: :class:`SvmClassifier`
        """
        dim = validators.integer(dim, minimum = 0, coerce_value = True)
        return cls(np.zeros((1, dim)), [0.0], value, 1.0)

    @property
    def support_points(self):
        """``M x d`` support points in the rescaled coordinates.

        :rtype: :class:`numpy.ndarray`
        """
        return self._support_points

    @property
    def dual_coefs(self):
        """Signed dual coefficients ``alpha_k * s_k``.

        :rtype: :class:`numpy.ndarray`
        """
        return self._dual_coefs

    @property
    def bias(self):
        """:rtype: :class:`float <python:float>`"""
        return self._bias

    @property
    def rbf_gamma(self):
        """:rtype: :class:`float <python:float>`"""
        return self._rbf_gamma

    @property
    def reg_c(self):
        """:rtype: :class:`float <python:float>`"""
        return self._reg_c

    @property
    def input_box(self):
        """Box mapped onto the unit cube before the kernel is applied, or ``None``.

        :rtype: :class:`Box` / :obj:`None <python:None>`
        """
        return self._input_box

    @property
    def converged(self):
        """:rtype: :class:`bool <python:bool>`"""
        return self._converged

    @property
    def dim(self):
        """Input dimension.

        :rtype: :class:`int <python:int>`
        """
        return int(self._support_points.shape[1])

    @property
    def is_constant(self):
        return not np.any(self._dual_coefs)

    def to_dict(self):
        return {
            'type': 'svm',
            'support_points': self._support_points.tolist(),
            'dual_coefs': self._dual_coefs.tolist(),
            'bias': self._bias,
            'rbf_gamma': self._rbf_gamma,
            'reg_c': self._reg_c,
            'input_box': self._input_box.to_dict() if self._input_box is not None else None,
            'converged': self._converged,
        }

    @classmethod
    def from_dict(cls, as_dict):
        as_dict = validators.dict(as_dict, allow_empty = False)
        support_points = np.asarray(as_dict.get('support_points'), dtype = float)
        input_box = as_dict.get('input_box')
        return cls(support_points.reshape(len(support_points), -1),
                   as_dict.get('dual_coefs'),
                   as_dict.get('bias'),
                   as_dict.get('rbf_gamma'),
                   reg_c = as_dict.get('reg_c', 1.0),
                   input_box = Box.from_dict(input_box) if input_box else None,
                   converged = as_dict.get('converged', True))

    def __repr__(self):
        return (f'SvmClassifier(dim={self.dim}, n_support={self._dual_coefs.size}, '
                f'rbf_gamma={self._rbf_gamma:g}, reg_c={self._reg_c:g})')


class KrrRegressor(object):
    """RBF kernel ridge regressor ``x -> R^m`` with standardized outputs.

    The prediction is ``output_mean + output_scale * (k(s(x)) @ dual_weights)``, where
    ``k`` is the vector of kernel values against the rescaled training inputs.
    """

    def __init__(self,
                 train_inputs,
                 dual_weights,
                 rbf_gamma,
                 ridge_lambda,
                 input_box = None,
                 output_mean = None,
                 output_scale = None):
        train_inputs = np.asarray(train_inputs, dtype = float)
        if train_inputs.ndim == 1:
            train_inputs = train_inputs.reshape(-1, 1)
        dual_weights = np.asarray(dual_weights, dtype = float)
        if dual_weights.ndim == 1:
            dual_weights = dual_weights.reshape(-1, 1)
        if dual_weights.shape[0] != train_inputs.shape[0]:
            raise errors.DimensionMismatchError(f'expected {train_inputs.shape[0]} rows of '
                                                f'dual weights. Was: {dual_weights.shape[0]}')
        output_dim = dual_weights.shape[1]
        output_mean = np.zeros(output_dim) if output_mean is None else \
            np.asarray(output_mean, dtype = float).reshape(-1)
        output_scale = np.ones(output_dim) if output_scale is None else \
            np.asarray(output_scale, dtype = float).reshape(-1)
        if output_mean.size != output_dim or output_scale.size != output_dim:
            raise errors.DimensionMismatchError('output_mean and output_scale must have one '
                                                'entry per output')

        for array in (train_inputs, dual_weights, output_mean, output_scale):
            array.setflags(write = False)
        self._train_inputs = train_inputs
        self._dual_weights = dual_weights
        self._rbf_gamma = validators.float(rbf_gamma, minimum = 0)
        self._ridge_lambda = validators.float(ridge_lambda, minimum = 0)
        self._input_box = input_box
        self._output_mean = output_mean
        self._output_scale = output_scale

    @property
    def train_inputs(self):
        """``M x d`` training inputs in the rescaled coordinates.

        :rtype: :class:`numpy.ndarray`
        """
        return self._train_inputs

    @property
    def dual_weights(self):
        """``M x m`` solution of ``(K + lambda I) W = Y`` on standardized outputs.

        :rtype: :class:`numpy.ndarray`
        """
        return self._dual_weights

    @property
    def rbf_gamma(self):
        return self._rbf_gamma

    @property
    def ridge_lambda(self):
        return self._ridge_lambda

    @property
    def input_box(self):
        return self._input_box

    @property
    def output_mean(self):
        return self._output_mean

    @property
    def output_scale(self):
        return self._output_scale

    @property
    def dim(self):
        """Input dimension ``d``.

        :rtype: :class:`int <python:int>`
        """
        return int(self._train_inputs.shape[1])

    @property
    def output_dim(self):
        """Output dimension ``m``.

        :rtype: :class:`int <python:int>`
        """
        return int(self._dual_weights.shape[1])

    def to_dict(self):
        return {
            'type': 'krr',
            'train_inputs': self._train_inputs.tolist(),
            'dual_weights': self._dual_weights.tolist(),
            'rbf_gamma': self._rbf_gamma,
            'ridge_lambda': self._ridge_lambda,
            'input_box': self._input_box.to_dict() if self._input_box is not None else None,
            'output_mean': self._output_mean.tolist(),
            'output_scale': self._output_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, as_dict):
        as_dict = validators.dict(as_dict, allow_empty = False)
        train_inputs = np.asarray(as_dict.get('train_inputs'), dtype = float)
        dual_weights = np.asarray(as_dict.get('dual_weights'), dtype = float)
        input_box = as_dict.get('input_box')
        return cls(train_inputs.reshape(len(train_inputs), -1),
                   dual_weights.reshape(len(dual_weights), -1),
                   as_dict.get('rbf_gamma'),
                   as_dict.get('ridge_lambda'),
                   input_box = Box.from_dict(input_box) if input_box else None,
                   output_mean = as_dict.get('output_mean'),
                   output_scale = as_dict.get('output_scale'))

    def __repr__(self):
        return (f'KrrRegressor(dim={self.dim}, output_dim={self.output_dim}, '
                f'rbf_gamma={self._rbf_gamma:g}, ridge_lambda={self._ridge_lambda:g})')


def svm_decision(classifier, x):
    """Evaluate the decision function.

    :param x: A ``d``-vector, or a ``K x d`` matrix evaluated row-wise.

    :returns: A :class:`float <python:float>` (or a vector for a matrix); ``<= 0`` means
      feasible.

    :raises DimensionMismatchError: if ``x`` does not have ``classifier.dim`` columns
    """
    inputs, single = _as_inputs(x, classifier.dim)
    lo, width = _scaling(classifier.input_box, classifier.dim)
    kernel, _ = _rbf((inputs - lo) / width, classifier.support_points, classifier.rbf_gamma)
    values = kernel @ classifier.dual_coefs + classifier.bias
    return float(values[0]) if single else values


def svm_gradient(classifier, x):
    """Return the analytic gradient of :func:`svm_decision` at the ``d``-vector ``x``.

    :rtype: :class:`numpy.ndarray`

    :raises DimensionMismatchError: if ``x`` does not have ``classifier.dim`` entries
    """
    inputs, _ = _as_inputs(x, classifier.dim)
    lo, width = _scaling(classifier.input_box, classifier.dim)
    kernel, diff = _rbf((inputs[:1] - lo) / width,
                        classifier.support_points,
                        classifier.rbf_gamma)
    weights = kernel[0] * classifier.dual_coefs
    gradient = -2.0 * classifier.rbf_gamma * (weights @ diff[0])
    return gradient / width


def svm_classify(classifier, x):
    """Return labels ``-1`` (decision ``<= 0``) or ``+1``."""
    values = np.atleast_1d(svm_decision(classifier, x))
    return np.where(values <= 0.0, FEASIBLE, INFEASIBLE)


def krr_predict(regressor, x):
    """Evaluate the regressor.

    :param x: A ``d``-vector, or a ``K x d`` matrix evaluated row-wise.

    :returns: An ``m``-vector (``K x m`` for a matrix).
    :rtype: :class:`numpy.ndarray`

    :raises DimensionMismatchError: if ``x`` does not have ``regressor.dim`` columns
    """
    inputs, single = _as_inputs(x, regressor.dim)
    lo, width = _scaling(regressor.input_box, regressor.dim)
    kernel, _ = _rbf((inputs - lo) / width, regressor.train_inputs, regressor.rbf_gamma)
    values = regressor.output_mean + regressor.output_scale * (kernel @ regressor.dual_weights)
    return values[0] if single else values


def krr_jacobian(regressor, x):
    """Return the ``m x d`` Jacobian of :func:`krr_predict` at the ``d``-vector ``x``.

    :rtype: :class:`numpy.ndarray`
    """
    inputs, _ = _as_inputs(x, regressor.dim)
    lo, width = _scaling(regressor.input_box, regressor.dim)
    kernel, diff = _rbf((inputs[:1] - lo) / width,
                        regressor.train_inputs,
                        regressor.rbf_gamma)
    # d/ds k_k = -2 gamma (s - x_k) k_k
    weighted = regressor.dual_weights * kernel[0][:, None]
    jacobian = -2.0 * regressor.rbf_gamma * (weighted.T @ diff[0])
    return regressor.output_scale[:, None] * jacobian / width[None, :]


def _class_counts(labels):
    return int(np.count_nonzero(labels == FEASIBLE)), int(np.count_nonzero(labels == INFEASIBLE))


def augment_balance(dataset, jitter_fraction = 0.01, seed = 0, box = None):
    """Oversample the minority class until both classes are equally large.

    Randomly chosen minority points are duplicated with Gaussian jitter whose standard
    deviation is ``jitter_fraction`` times the width of ``box`` (the interval hull of the
    data when ``box`` is omitted). Jittered points keep their label, are clipped to the box,
    and are appended after the original rows, which are left untouched.

    :param dataset: Labeled points.
    :type dataset: :class:`SampleSet`

    :param jitter_fraction: Relative jitter scale. Defaults to ``0.01``.
    :type jitter_fraction: :class:`float <python:float>`

    :param seed: Seed of the duplication and jitter draws.
    :type seed: :class:`int <python:int>`

    :param box: Domain the jitter is scaled by and clipped to.
    :type box: :class:`Box` / :obj:`None <python:None>`

    :returns: ``dataset`` itself if it is already balanced.
    :rtype: :class:`SampleSet`

    :raises SingleClassDatasetError: if either class is empty
    """
    if not isinstance(dataset, SampleSet):
        raise ValueError(f'dataset must be a SampleSet. Was: {dataset.__class__.__name__}')
    jitter_fraction = validators.float(jitter_fraction, minimum = 0)
    n_feasible, n_infeasible = _class_counts(dataset.labels)
    if n_feasible == 0 or n_infeasible == 0:
        raise errors.SingleClassDatasetError(f'cannot balance {n_feasible} feasible and '
                                             f'{n_infeasible} infeasible points')
    if n_feasible == n_infeasible:
        return dataset

    minority = FEASIBLE if n_feasible < n_infeasible else INFEASIBLE
    deficit = abs(n_feasible - n_infeasible)
    box = box if box is not None else interval_hull(dataset.points)
    if box.dim != dataset.dim:
        raise errors.DimensionMismatchError(f'box has dimension {box.dim}, '
                                            f'dataset has dimension {dataset.dim}')

    rng = np.random.default_rng(derive_seed(seed, 'augment'))
    pool = np.flatnonzero(dataset.labels == minority)
    chosen = dataset.points[pool[rng.integers(0, pool.size, size = deficit)]]
    jittered = box.clip(chosen + rng.standard_normal(chosen.shape) *
                        (jitter_fraction * box.width))

    points = np.vstack([dataset.points, jittered])
    labels = np.concatenate([dataset.labels, np.full(deficit, minority)])
    metadata = dict(dataset.metadata)
    metadata['augmented'] = deficit
    logger.debug('balanced %d/%d by adding %d jittered copies', n_feasible, n_infeasible,
                 deficit)

    return SampleSet(points,
                     labels,
                     max(dataset.n_evaluations, labels.size),
                     dataset.column_roles,
                     metadata = metadata)


def cap_training_set(dataset, max_points, seed = 0):
    """Subsample each class to at most ``max_points // 2`` rows, keeping row order.

    :rtype: :class:`SampleSet`
    """
    max_points = validators.integer(max_points, minimum = 2, coerce_value = True)
    if dataset.size <= max_points:
        return dataset

    half = max_points // 2
    rng = np.random.default_rng(derive_seed(seed, 'cap'))
    keep = []
    for label in (FEASIBLE, INFEASIBLE):
        rows = np.flatnonzero(dataset.labels == label)
        if rows.size > half:
            rows = rng.choice(rows, size = half, replace = False)
        keep.append(rows)

    return dataset.subset(np.sort(np.concatenate(keep)))


def _fit_svc(inputs, labels, reg_c, gamma):
    model = SVC(C = reg_c,
                kernel = 'rbf',
                gamma = gamma,
                tol = SMO_TOLERANCE,
                max_iter = 10 * inputs.shape[0])
    with warnings.catch_warnings(record = True) as caught:
        warnings.simplefilter('always', ConvergenceWarning)
        model.fit(inputs, labels)
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    return model, converged


def _fold_splits(splitter, inputs, labels):
    if labels is None:
        return list(splitter.split(inputs))
    return list(splitter.split(inputs, labels))


def train_svm(dataset, hyper_grid = None, k_folds = 2, seed = 0):
    """Fit an RBF support vector classifier with k-fold grid search.

    Each ``(reg_c, rbf_gamma)`` grid point is scored by the mean accuracy over stratified
    folds (fold assignment derived from ``seed``); ties go to the smaller ``reg_c``, then
    the smaller ``rbf_gamma``. The winner is refitted on all data with SMO (tolerance
    ``1e-3``, at most ``10 * K`` iterations). If that limit is hit the best-so-far model is
    returned with ``converged = False`` and a warning is logged.

    :param dataset: Labeled points, preferably balanced (see :func:`augment_balance`).
    :type dataset: :class:`SampleSet`

    :param hyper_grid: Dict with ``reg_c`` and ``rbf_gamma`` lists.
    :type hyper_grid: :class:`dict <python:dict>`

    :param k_folds: Number of folds. Defaults to ``2``.
    :type k_folds: :class:`int <python:int>`

    :rtype: :class:`tuple <python:tuple>` of :class:`SvmClassifier` and :class:`CvReport`

    :raises SingleClassDatasetError: if either class is empty
    """
    if not isinstance(dataset, SampleSet):
        raise ValueError(f'dataset must be a SampleSet. Was: {dataset.__class__.__name__}')
    grid = _grid_points(hyper_grid or DEFAULT_SVM_GRID, 'reg_c', 'rbf_gamma')
    k_folds = validators.integer(k_folds, minimum = 2, coerce_value = True)
    labels = dataset.labels
    n_feasible, n_infeasible = _class_counts(labels)
    if n_feasible == 0 or n_infeasible == 0:
        raise errors.SingleClassDatasetError(f'cannot train a classifier on {n_feasible} '
                                             f'feasible and {n_infeasible} infeasible points')

    input_box = _training_frame(dataset.points)
    scaled = (dataset.points - input_box.lo) / input_box.width

    grid_scores = []
    best_hypers, best_folds = grid[0], []
    if min(n_feasible, n_infeasible) >= k_folds:
        splitter = StratifiedKFold(n_splits = k_folds,
                                   shuffle = True,
                                   random_state = derive_seed(seed, 'folds') % 2**32)
        splits = _fold_splits(splitter, scaled, labels)
        best_score = -np.inf
        for reg_c, gamma in grid:
            folds = []
            for train, test in splits:
                model, _ = _fit_svc(scaled[train], labels[train], reg_c, gamma)
                predicted = np.where(model.decision_function(scaled[test]) <= 0.0,
                                     FEASIBLE, INFEASIBLE)
                folds.append(float(np.mean(predicted == labels[test])))
            score = float(np.mean(folds))
            grid_scores.append({'reg_c': reg_c, 'rbf_gamma': gamma, 'score': score})
            if score > best_score:
                best_score, best_hypers, best_folds = score, (reg_c, gamma), folds
    else:
        logger.warning('too few points per class for %d folds; fitting reg_c=%g, '
                       'rbf_gamma=%g without cross-validation', k_folds, *best_hypers)

    reg_c, gamma = best_hypers
    model, converged = _fit_svc(scaled, labels, reg_c, gamma)
    if not converged:
        logger.warning('SMO stopped at its iteration limit (reg_c=%g, rbf_gamma=%g); '
                       'using the best-so-far classifier', reg_c, gamma)

    classifier = SvmClassifier(model.support_vectors_,
                               model.dual_coef_[0],
                               model.intercept_[0],
                               gamma,
                               reg_c = reg_c,
                               input_box = input_box,
                               converged = converged)
    train_accuracy = float(np.mean(svm_classify(classifier, dataset.points) == labels))
    report = CvReport('accuracy',
                      best_folds,
                      {'reg_c': reg_c, 'rbf_gamma': gamma},
                      train_accuracy,
                      converged = converged,
                      grid_scores = grid_scores)
    logger.debug('trained %r: %r', classifier, report)

    return classifier, report


def _fit_kernel_ridge(inputs, outputs, gamma, ridge_lambda):
    model = KernelRidge(alpha = max(ridge_lambda, RIDGE_FLOOR), kernel = 'rbf', gamma = gamma)
    with warnings.catch_warnings(record = True) as caught:
        warnings.simplefilter('always')
        warnings.simplefilter('ignore', LinAlgWarning)
        model.fit(inputs, outputs)
    # KernelRidge falls back to least squares (with this warning) when Cholesky fails
    if any('Singular matrix' in str(w.message) for w in caught):
        raise errors.SingularKernelError(f'kernel matrix is singular at rbf_gamma={gamma:g}, '
                                         f'ridge_lambda={ridge_lambda:g}')
    return model


def train_krr(inputs, outputs, hyper_grid = None, k_folds = 2, seed = 0):
    """Fit an RBF kernel ridge regressor with k-fold grid search.

    Inputs are rescaled to their training box and outputs standardized. Each
    ``(rbf_gamma, ridge_lambda)`` grid point is scored by mean fold MSE on the standardized
    outputs (ties to the smaller ``rbf_gamma``, then the smaller ``ridge_lambda``); the
    winner is refitted on all data. ``ridge_lambda`` is floored at ``1e-10``.

    :param inputs: ``M x d`` inputs.
    :param outputs: ``M x m`` outputs (or an ``M``-vector).

    :rtype: :class:`tuple <python:tuple>` of :class:`KrrRegressor` and :class:`CvReport`

    :raises ValueError: if fewer than ``2 * k_folds`` points are given
    :raises SingularKernelError: if no grid point (or the final refit) can be solved
    """
    inputs = np.asarray(inputs, dtype = float)
    if inputs.ndim == 1:
        inputs = inputs.reshape(-1, 1)
    outputs = np.asarray(outputs, dtype = float)
    if outputs.ndim == 1:
        outputs = outputs.reshape(-1, 1)
    if outputs.shape[0] != inputs.shape[0]:
        raise errors.DimensionMismatchError(f'{inputs.shape[0]} inputs but '
                                            f'{outputs.shape[0]} outputs')
    grid = _grid_points(hyper_grid or DEFAULT_KRR_GRID, 'rbf_gamma', 'ridge_lambda')
    k_folds = validators.integer(k_folds, minimum = 2, coerce_value = True)
    if inputs.shape[0] < 2 * k_folds:
        raise ValueError(f'train_krr needs at least {2 * k_folds} points. '
                         f'Was: {inputs.shape[0]}')

    input_box = _training_frame(inputs)
    scaled = (inputs - input_box.lo) / input_box.width
    scaler = StandardScaler().fit(outputs)
    standardized = scaler.transform(outputs)

    splitter = KFold(n_splits = k_folds,
                     shuffle = True,
                     random_state = derive_seed(seed, 'folds') % 2**32)
    splits = _fold_splits(splitter, scaled, None)

    grid_scores = []
    best_score, best_hypers, best_folds = np.inf, None, []
    for gamma, ridge_lambda in grid:
        folds = []
        try:
            for train, test in splits:
                model = _fit_kernel_ridge(scaled[train], standardized[train], gamma,
                                          ridge_lambda)
                residual = model.predict(scaled[test]).reshape(len(test), -1) - \
                    standardized[test]
                folds.append(float(np.mean(residual ** 2)))
        except errors.SingularKernelError as error:
            logger.debug('skipping grid point: %s', error)
            continue
        score = float(np.mean(folds))
        grid_scores.append({'rbf_gamma': gamma, 'ridge_lambda': ridge_lambda, 'score': score})
        if score < best_score:
            best_score, best_hypers, best_folds = score, (gamma, ridge_lambda), folds

    if best_hypers is None:
        raise errors.SingularKernelError('every grid point produced a singular kernel system')

    gamma, ridge_lambda = best_hypers
    model = _fit_kernel_ridge(scaled, standardized, gamma, ridge_lambda)
    regressor = KrrRegressor(scaled,
                             np.asarray(model.dual_coef_).reshape(scaled.shape[0], -1),
                             gamma,
                             max(ridge_lambda, RIDGE_FLOOR),
                             input_box = input_box,
                             output_mean = scaler.mean_,
                             output_scale = scaler.scale_)
    fitted = (krr_predict(regressor, inputs).reshape(outputs.shape) - scaler.mean_) / \
        scaler.scale_
    train_mse = float(np.mean((fitted - standardized) ** 2))
    report = CvReport('mse',
                      best_folds,
                      {'rbf_gamma': gamma, 'ridge_lambda': ridge_lambda},
                      train_mse,
                      grid_scores = grid_scores)
    logger.debug('trained %r: %r', regressor, report)

    return regressor, report


def surrogate_from_dict(as_dict):
    """Rebuild a classifier or regressor from its :meth:`to_dict` form."""
    as_dict = validators.dict(as_dict, allow_empty = False)
    kind = as_dict.get('type')
    if kind == 'svm':
        return SvmClassifier.from_dict(as_dict)
    if kind == 'krr':
        return KrrRegressor.from_dict(as_dict)
    raise ValueError(f'unknown surrogate type. Was: {kind}')


def fit_classifier(samples, config = None, seed = 0, box = None):
    """Cap, balance and train a classifier on ``samples`` with the settings in ``config``.

    A set whose points all carry the same label yields a :meth:`constant
    <SvmClassifier.constant>` classifier (``-1`` if every point is feasible, ``+1``
    otherwise) and a report without folds.

    :param config: Surrogate settings. Defaults to :class:`SurrogateConfig` defaults.
    :type config: :class:`SurrogateConfig`

    :param box: Domain used to scale the balancing jitter.
    :type box: :class:`Box` / :obj:`None <python:None>`

    :rtype: :class:`tuple <python:tuple>` of :class:`SvmClassifier` and :class:`CvReport`
    """
    config = config if config is not None else SurrogateConfig()
    n_feasible, n_infeasible = _class_counts(samples.labels)
    if n_feasible == 0 or n_infeasible == 0:
        value = -1.0 if n_infeasible == 0 else 1.0
        logger.info('all %d points share one label; using a constant classifier (%g)',
                    samples.size, value)
        return (SvmClassifier.constant(samples.dim, value),
                CvReport('accuracy', [], {}, 1.0))

    capped = cap_training_set(samples, config.max_training_points, seed = seed)
    balanced = augment_balance(capped,
                               jitter_fraction = config.jitter_fraction,
                               seed = seed,
                               box = box)
    return train_svm(balanced, config.svm_grid, config.k_folds, seed = seed)
