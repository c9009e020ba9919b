# -*- coding: utf-8 -*-
"""Quasi-random generation and feasible-set sampling."""
import logging
import threading
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.stats import qmc
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import GaussianMixture
from validator_collection import validators, checkers

from dag_feasibility import errors
from dag_feasibility.config import SamplerConfig, SamplingPolicyEnum
from dag_feasibility.domains import Box, SampleSet, FEASIBLE, INFEASIBLE

logger = logging.getLogger(__name__)

MAX_SOBOL_DIM = getattr(qmc.Sobol, 'MAXDIM', 21201)

_MIXTURE_ROUNDS = 100


def derive_seed(seed, *keys):
    """Derive an independent 63-bit seed from ``seed`` and a sequence of named keys.

    Strings are hashed with CRC-32, integers are used directly, so
    ``derive_seed(0, 'sampler', 'fb', 3)`` is stable across processes and platforms.

    :rtype: :class:`int <python:int>`
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if checkers.is_string(key):
            entropy.append(zlib.crc32(key.encode('utf-8')))
        else:
            entropy.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    words = np.random.SeedSequence(entropy).generate_state(2, dtype = np.uint32)
    return (int(words[0]) << 31) | (int(words[1]) >> 1)


class EvalCounter(object):
    """Thread-safe tally of work spent during a run."""

    def __init__(self, constituent_evals = 0, constraint_evals = 0, nlp_solves = 0):
        self._lock = threading.Lock()
        self._constituent_evals = validators.integer(constituent_evals,
                                                     minimum = 0,
                                                     coerce_value = True)
        self._constraint_evals = validators.integer(constraint_evals,
                                                    minimum = 0,
                                                    coerce_value = True)
        self._nlp_solves = validators.integer(nlp_solves, minimum = 0, coerce_value = True)

    @property
    def constituent_evals(self):
        """Node-model evaluations (one call of a node's constituent maps).

        :rtype: :class:`int <python:int>`
        """
        return self._constituent_evals

    @property
    def constraint_evals(self):
        """Candidate feasibility checks.

        :rtype: :class:`int <python:int>`
        """
        return self._constraint_evals

    @property
    def nlp_solves(self):
        """Local NLP solves started by coupling checks.

        :rtype: :class:`int <python:int>`
        """
        return self._nlp_solves

    def add(self, constituent = 0, constraint = 0, nlp = 0):
        if min(constituent, constraint, nlp) < 0:
            raise ValueError('counter increments must be nonnegative')
        with self._lock:
            self._constituent_evals += int(constituent)
            self._constraint_evals += int(constraint)
            self._nlp_solves += int(nlp)

    def copy(self):
        with self._lock:
            return EvalCounter(self._constituent_evals,
                               self._constraint_evals,
                               self._nlp_solves)

    def __add__(self, other):
        if not isinstance(other, EvalCounter):
            return NotImplemented
        return EvalCounter(self.constituent_evals + other.constituent_evals,
                           self.constraint_evals + other.constraint_evals,
                           self.nlp_solves + other.nlp_solves)

    def __sub__(self, other):
        if not isinstance(other, EvalCounter):
            return NotImplemented
        return EvalCounter(self.constituent_evals - other.constituent_evals,
                           self.constraint_evals - other.constraint_evals,
                           self.nlp_solves - other.nlp_solves)

    def __eq__(self, other):
        if not isinstance(other, EvalCounter):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self):
        return {
            'constituent_evals': self._constituent_evals,
            'constraint_evals': self._constraint_evals,
            'nlp_solves': self._nlp_solves,
        }

    @classmethod
    def from_dict(cls, as_dict):
        as_dict = validators.dict(as_dict, allow_empty = True) or {}
        return cls(**as_dict)

    def __repr__(self):
        return f'EvalCounter({self.to_dict()})'


def sobol(dim, n, skip = 0, seed = None):
    """Return ``n`` points of the Sobol sequence in ``[0, 1]^dim``.

    Without a ``seed`` the classic unscrambled sequence (Joe–Kuo direction numbers) is
    returned, starting at the origin. With a ``seed`` the sequence is Owen-scrambled, which
    is what the samplers use so that independent streams do not share points.

    :param dim: Dimension, ``1 <= dim <= MAX_SOBOL_DIM``.
    :type dim: :class:`int <python:int>`

    :param n: Number of points.
    :type n: :class:`int <python:int>`

    :param skip: Points of the sequence to skip first. Defaults to ``0``.
    :type skip: :class:`int <python:int>`

    :param seed: Scrambling seed. Defaults to :obj:`None <python:None>` (unscrambled).
    :type seed: :class:`int <python:int>` / :obj:`None <python:None>`

    :rtype: :class:`numpy.ndarray`

    :raises DimensionUnsupportedError: if ``dim`` exceeds the direction-number table
    """
    dim = validators.integer(dim, allow_empty = False, minimum = 1, coerce_value = True)
    n = validators.integer(n, allow_empty = False, minimum = 1, coerce_value = True)
    skip = validators.integer(skip, allow_empty = False, minimum = 0, coerce_value = True)
    if dim > MAX_SOBOL_DIM:
        raise errors.DimensionUnsupportedError(f'Sobol direction numbers cover up to '
                                               f'{MAX_SOBOL_DIM} dimensions. Was: {dim}')

    return _SobolStream(dim, seed = seed, skip = skip).draw(n)


class _SobolStream(object):
    """Stateful Sobol generator; ``dim == 0`` yields empty rows."""

    def __init__(self, dim, seed = None, skip = 0):
        self.dim = dim
        self._engine = None
        if dim > 0:
            self._engine = qmc.Sobol(d = dim, scramble = seed is not None, seed = seed)
            if skip:
                self._engine.fast_forward(skip)

    def draw(self, n):
        if self._engine is None:
            return np.zeros((n, 0))
        with warnings.catch_warnings():
            # balance properties only hold for powers of two; partial batches are fine here
            warnings.simplefilter('ignore', UserWarning)
            return self._engine.random(n)


def scale_to_box(unit_points, box):
    """Map points of the unit cube affinely onto ``box`` (``lo + p * (hi - lo)``).

    :raises DimensionMismatchError: if the point dimension differs from ``box.dim``
    """
    unit_points = np.asarray(unit_points, dtype = float)
    if unit_points.shape[-1] != box.dim:
        raise errors.DimensionMismatchError(f'points have dimension {unit_points.shape[-1]}, '
                                            f'box has dimension {box.dim}')
    return box.lo + unit_points * box.width


def acceptance_ratio(n_accepted, counter):
    """Return accepted points per constituent-function evaluation.

    :param n_accepted: Joint feasible points identified.
    :type n_accepted: :class:`int <python:int>`

    :param counter: Evaluations spent, or their count.
    :type counter: :class:`EvalCounter` / :class:`int <python:int>`

    :rtype: :class:`float <python:float>`

    :raises ZeroEvaluationsError: if no constituent evaluation was spent
    """
    n_accepted = validators.integer(n_accepted, minimum = 0, coerce_value = True)
    total = counter.constituent_evals if isinstance(counter, EvalCounter) else \
        validators.integer(counter, minimum = 0, coerce_value = True)
    if total == 0:
        raise errors.ZeroEvaluationsError('acceptance ratio is undefined with zero '
                                          'constituent evaluations')
    return n_accepted / total


def _unpack(result):
    if isinstance(result, tuple):
        if len(result) == 2:
            feasible, n_evals = result
            payload = None
        elif len(result) == 3:
            feasible, n_evals, payload = result
        else:
            raise ValueError(f'feasibility functions return (feasible, n_evals[, payload]). '
                             f'Was: a {len(result)}-tuple')
    else:
        raise ValueError('feasibility functions return (feasible, n_evals[, payload]). '
                         f'Was: {result.__class__.__name__}')

    return bool(feasible), int(n_evals), payload


class _Collection(object):
    """Candidate evaluations merged in candidate-index order."""

    def __init__(self):
        self.points = []
        self.labels = []
        self.payloads = []
        self.spent = 0
        self.n_feasible = 0

    @property
    def evaluated(self):
        return len(self.labels)

    def extend(self, other):
        self.points.extend(other.points)
        self.labels.extend(other.labels)
        self.payloads.extend(other.payloads)
        self.spent += other.spent
        self.n_feasible += other.n_feasible

    def feasible_points(self):
        return np.asarray([p for p, s in zip(self.points, self.labels) if s == FEASIBLE])


def _collect(batches, feasibility_fn, target, budget, pool = None):
    """Evaluate candidate batches until ``target`` feasible points or ``budget`` is spent.

    Results are consumed strictly in candidate order, so a pool only changes how fast the
    answer arrives, never what it is. Candidates evaluated past the stopping point are
    dropped together with their payloads.
    """
    collection = _Collection()
    for batch in batches:
        if batch.shape[0] == 0:
            break
        if pool is None:
            results = (feasibility_fn(point) for point in batch)
        else:
            results = pool.map(feasibility_fn, list(batch))

        for point, result in zip(batch, results):
            feasible, n_evals, payload = _unpack(result)
            if n_evals < 1:
                raise ValueError(f'a candidate evaluation must cost at least one '
                                 f'constituent evaluation. Was: {n_evals}')
            collection.points.append(np.array(point, dtype = float))
            collection.labels.append(FEASIBLE if feasible else INFEASIBLE)
            collection.payloads.append(payload)
            collection.spent += n_evals
            if feasible:
                collection.n_feasible += 1
            if collection.n_feasible >= target or collection.spent >= budget:
                return collection

    return collection


def _sobol_batches(stream, box, batch_size):
    while True:
        yield scale_to_box(stream.draw(batch_size), box)


def _mixture_batches(mixture, box, batch_size, seed):
    """Draw from ``mixture`` (fitted in unit coordinates), truncated to the unit box."""
    weights = mixture.weights_ / mixture.weights_.sum()
    means = mixture.means_
    scales = np.sqrt(mixture.covariances_)
    batch = 0
    while True:
        rng = np.random.default_rng(derive_seed(seed, 'mixture', batch))
        accepted = []
        count = 0
        for _ in range(_MIXTURE_ROUNDS):
            components = rng.choice(weights.size, size = batch_size, p = weights)
            draws = means[components] + scales[components] * \
                rng.standard_normal((batch_size, box.dim))
            inside = np.all((draws >= 0.0) & (draws <= 1.0), axis = 1)
            accepted.append(draws[inside])
            count += int(inside.sum())
            if count >= batch_size:
                break
        if count == 0:
            logger.warning('mixture proposal has no mass inside the box; stopping refinement')
            return
        yield scale_to_box(np.vstack(accepted)[:batch_size], box)
        batch += 1


def _to_sample_set(collection, box, column_roles, metadata):
    points = np.vstack(collection.points) if collection.points else np.zeros((0, box.dim))
    return SampleSet(points.reshape(-1, box.dim),
                     collection.labels,
                     collection.spent,
                     column_roles or [('x', box.dim)],
                     metadata = metadata)


def _resolve(box, config, counter):
    if not isinstance(box, Box):
        raise ValueError(f'box must be a Box. Was: {box.__class__.__name__}')
    if config is None:
        config = SamplerConfig()
    elif checkers.is_dict(config):
        config = SamplerConfig.from_dict(config)
    if counter is None:
        counter = EvalCounter()
    return config, counter


def _finish(collection, box, budget, counter, column_roles, metadata):
    counter.add(constituent = collection.spent, constraint = collection.evaluated)
    if collection.n_feasible == 0:
        raise errors.BudgetExhaustedEmptyError(
            f'no feasible point after {collection.evaluated} candidates '
            f'({collection.spent} evaluations, budget {budget})',
            payloads = collection.payloads
        )
    logger.debug('sampled %d feasible of %d candidates (%d evaluations)',
                 collection.n_feasible, collection.evaluated, collection.spent)
    return _to_sample_set(collection, box, column_roles, metadata), collection.payloads


def _rejection(feasibility_fn, box, config, counter, column_roles, pool):
    stream = _SobolStream(box.dim, seed = config.seed)
    collection = _collect(_sobol_batches(stream, box, config.batch_size),
                          feasibility_fn,
                          config.target_feasible,
                          config.max_evaluations,
                          pool = pool)
    metadata = {'policy': SamplingPolicyEnum.SOBOL_REJECTION.value}
    return _finish(collection, box, config.max_evaluations, counter, column_roles, metadata)


def _phase_stats(collection):
    return {'evaluated': collection.evaluated,
            'feasible': collection.n_feasible,
            'evaluations': collection.spent}


def _adaptive(feasibility_fn, box, config, counter, column_roles, pool):
    stream = _SobolStream(box.dim, seed = config.seed)
    screening_budget = max(1, int(round(config.refine_fraction * config.max_evaluations)))
    collection = _collect(_sobol_batches(stream, box, config.batch_size),
                          feasibility_fn,
                          config.target_feasible,
                          screening_budget,
                          pool = pool)
    metadata = {'policy': SamplingPolicyEnum.ADAPTIVE_MIXTURE.value,
                'fallback': False,
                'phases': {'screening': _phase_stats(collection)}}

    remaining_target = config.target_feasible - collection.n_feasible
    remaining_budget = config.max_evaluations - collection.spent
    if remaining_target <= 0 or remaining_budget <= 0:
        return _finish(collection, box, config.max_evaluations, counter, column_roles, metadata)

    if collection.n_feasible < config.mixture_components or box.dim == 0:
        logger.info('screening found %d feasible points (< %d components); continuing '
                    'with rejection sampling', collection.n_feasible,
                    config.mixture_components)
        metadata['fallback'] = True
        batches = _sobol_batches(stream, box, config.batch_size)
    else:
        width = np.where(box.width > 0, box.width, 1.0)
        unit_feasible = (collection.feasible_points() - box.lo) / width
        mixture = GaussianMixture(n_components = config.mixture_components,
                                  covariance_type = 'diag',
                                  init_params = 'kmeans',
                                  max_iter = 20,
                                  tol = 0.0,
                                  reg_covar = 1e-6,
                                  random_state = derive_seed(config.seed, 'kmeans') % 2**32)
        with warnings.catch_warnings():
            # a fixed number of EM iterations is the intended schedule
            warnings.simplefilter('ignore', ConvergenceWarning)
            mixture.fit(unit_feasible)
        batches = _mixture_batches(mixture, box, config.batch_size, config.seed)

    refinement = _collect(batches,
                          feasibility_fn,
                          remaining_target,
                          remaining_budget,
                          pool = pool)
    metadata['phases']['refinement'] = _phase_stats(refinement)
    collection.extend(refinement)

    return _finish(collection, box, config.max_evaluations, counter, column_roles, metadata)


def draw_samples(feasibility_fn,
                 box,
                 config = None,
                 counter = None,
                 workers = 1,
                 column_roles = None):
    """Sample ``box`` with the policy named in ``config`` and return the payloads too.

    This is the engine behind :func:`rejection_sample` and :func:`adaptive_sample`. The
    feasibility function may return a third value (for instance the node outputs computed
    while checking a candidate); those values come back aligned with the rows of the
    returned :class:`SampleSet`.

    :returns: The sample set and the list of per-row payloads.
    :rtype: :class:`tuple <python:tuple>` of :class:`SampleSet` and
      :class:`list <python:list>`
    """
    config, counter = _resolve(box, config, counter)
    workers = validators.integer(workers, minimum = 1, coerce_value = True)
    runner = _adaptive if config.policy == SamplingPolicyEnum.ADAPTIVE_MIXTURE else _rejection

    if workers == 1:
        return runner(feasibility_fn, box, config, counter, column_roles, None)
    with ThreadPoolExecutor(max_workers = workers) as pool:
        return runner(feasibility_fn, box, config, counter, column_roles, pool)


def sample_candidates(feasibility_fn,
                      batches,
                      box,
                      target,
                      budget,
                      counter = None,
                      workers = 1,
                      column_roles = None,
                      metadata = None):
    """Check candidates from an arbitrary stream of batches, in order.

    Stops at ``target`` feasible points or once ``budget`` constituent evaluations are
    spent, exactly as the box samplers do.

    :param batches: Iterable of ``(n, box.dim)`` candidate arrays.
    :param box: Domain the candidates live in (used for the column layout).
    :type box: :class:`Box`

    :returns: The sample set and the list of per-row payloads.

    :raises BudgetExhaustedEmptyError: if the budget is spent without a feasible point
    """
    target = validators.integer(target, minimum = 1, coerce_value = True)
    budget = validators.integer(budget, minimum = 1, coerce_value = True)
    workers = validators.integer(workers, minimum = 1, coerce_value = True)
    counter = counter if counter is not None else EvalCounter()

    if workers == 1:
        collection = _collect(batches, feasibility_fn, target, budget)
    else:
        with ThreadPoolExecutor(max_workers = workers) as pool:
            collection = _collect(batches, feasibility_fn, target, budget, pool = pool)

    return _finish(collection, box, budget, counter, column_roles, dict(metadata or {}))


def rejection_sample(feasibility_fn,
                     box,
                     config = None,
                     counter = None,
                     workers = 1,
                     column_roles = None):
    """Sample ``box`` by Sobol candidates and keep everything that was evaluated.

    Candidates are drawn from a scrambled Sobol stream seeded with ``config.seed`` and
    checked in order until ``config.target_feasible`` feasible points are found or
    ``config.max_evaluations`` constituent evaluations are spent. Infeasible candidates are
    kept with label ``+1``.

    :param feasibility_fn: Callable ``point -> (feasible, n_constituent_evals)``.
    :param box: Search domain.
    :type box: :class:`Box`
    :param config: Sampler settings. Defaults to :class:`SamplerConfig` defaults.
    :type config: :class:`SamplerConfig` / :class:`dict <python:dict>`
    :param counter: Counter to update. A fresh one is used if omitted.
    :type counter: :class:`EvalCounter`
    :param workers: Worker threads evaluating candidates. Defaults to ``1``.
    :type workers: :class:`int <python:int>`

    :rtype: :class:`SampleSet`

    :raises BudgetExhaustedEmptyError: if the budget is spent without a feasible point
    """
    config, counter = _resolve(box, config, counter)
    config = config.copy(policy = SamplingPolicyEnum.SOBOL_REJECTION.value)
    samples, _ = draw_samples(feasibility_fn, box, config, counter, workers, column_roles)
    return samples


def adaptive_sample(feasibility_fn,
                    box,
                    config = None,
                    counter = None,
                    workers = 1,
                    column_roles = None):
    """Two-phase sampling: Sobol screening, then a Gaussian mixture fitted to the feasible
    points proposes the remaining candidates.

    The screening phase spends ``config.refine_fraction`` of the budget. A mixture of
    ``config.mixture_components`` diagonal Gaussians (k-means initialised, 20 EM
    iterations) is then fitted to the feasible points and sampled, truncated to ``box``.
    With fewer feasible points than components the sampler falls back to plain rejection
    sampling. Per-phase statistics are stored in ``metadata['phases']``.

    Parameters and errors as :func:`rejection_sample`.

    :rtype: :class:`SampleSet`
    """
    config, counter = _resolve(box, config, counter)
    config = config.copy(policy = SamplingPolicyEnum.ADAPTIVE_MIXTURE.value)
    samples, _ = draw_samples(feasibility_fn, box, config, counter, workers, column_roles)
    return samples
