# -*- coding: utf-8 -*-
"""Run configuration objects.

Every object is built from keyword arguments (or a :class:`dict <python:dict>`) and
validates each value as it is assigned, so a configuration that exists is a configuration
that is usable.
"""
import hashlib
import os
from enum import Enum

import simplejson as json
import yaml
from validator_collection import validators, checkers

from dag_feasibility import errors


class SamplingPolicyEnum(str, Enum):
    SOBOL_REJECTION = 'sobol_rejection'
    ADAPTIVE_MIXTURE = 'adaptive_mixture'


class _ConfigBase(object):
    """Shared keyword-argument construction and dict round-tripping."""

    _fields = ()

    def __init__(self, **kwargs):
        for key in kwargs:
            if key not in self._fields:
                raise errors.InvalidConfigurationError(
                    f'{self.__class__.__name__} has no setting "{key}"'
                )
            value = kwargs.get(key)
            setattr(self, key, value)

    def to_dict(self):
        """Return the settings as a plain :class:`dict <python:dict>`."""
        as_dict = {}
        for key in self._fields:
            value = getattr(self, key)
            if isinstance(value, Enum):
                value = value.value
            elif isinstance(value, _ConfigBase):
                value = value.to_dict()
            as_dict[key] = value
        return as_dict

    @classmethod
    def from_dict(cls, as_dict):
        """Create an instance from a :class:`dict <python:dict>` of settings.

        :rtype: instance of the calling class
        """
        as_dict = validators.dict(as_dict, allow_empty = True) or {}
        return cls(**as_dict)

    def copy(self, **overrides):
        """Return a copy with ``overrides`` applied."""
        as_dict = self.to_dict()
        as_dict.update({key: value for key, value in overrides.items() if value is not None})
        return self.__class__.from_dict(as_dict)

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self):
        return f'{self.__class__.__name__}({self.to_dict()})'


class SamplerConfig(_ConfigBase):
    """Settings for the feasible-set samplers."""

    _fields = ('target_feasible', 'max_evaluations', 'seed', 'policy',
               'mixture_components', 'refine_fraction', 'batch_size')

    def __init__(self, **kwargs):
        self._target_feasible = 500
        self._max_evaluations = 20000
        self._seed = 0
        self._policy = SamplingPolicyEnum.SOBOL_REJECTION
        self._mixture_components = 8
        self._refine_fraction = 0.5
        self._batch_size = 256

        super().__init__(**kwargs)

        if self._target_feasible > self._max_evaluations:
            raise errors.InvalidConfigurationError(
                f'target_feasible ({self._target_feasible}) cannot exceed max_evaluations '
                f'({self._max_evaluations})'
            )

    @property
    def target_feasible(self):
        """Number of feasible points (``K``) at which sampling stops. Defaults to ``500``.

        :rtype: :class:`int <python:int>`
        """
        return self._target_feasible

    @target_feasible.setter
    def target_feasible(self, value):
        self._target_feasible = validators.integer(value,
                                                   allow_empty = False,
                                                   minimum = 1,
                                                   coerce_value = True)

    @property
    def max_evaluations(self):
        """Budget of constituent-function evaluations. Defaults to ``20000``.

        :rtype: :class:`int <python:int>`
        """
        return self._max_evaluations

    @max_evaluations.setter
    def max_evaluations(self, value):
        self._max_evaluations = validators.integer(value,
                                                   allow_empty = False,
                                                   minimum = 1,
                                                   coerce_value = True)

    @property
    def seed(self):
        """Seed of the candidate streams. Defaults to ``0``.

        :rtype: :class:`int <python:int>`
        """
        return self._seed

    @seed.setter
    def seed(self, value):
        self._seed = validators.integer(value,
                                        allow_empty = False,
                                        minimum = 0,
                                        maximum = 2**64 - 1,
                                        coerce_value = True)

    @property
    def policy(self):
        """Sampling policy. Accepts ``'sobol_rejection'`` (the default) or
        ``'adaptive_mixture'``.

        :rtype: :class:`SamplingPolicyEnum`
        """
        return self._policy

    @policy.setter
    def policy(self, value):
        value = validators.string(value, allow_empty = False).lower()
        if value not in [member.value for member in SamplingPolicyEnum]:
            raise errors.InvalidConfigurationError(f'value ({value}) is not a recognized '
                                                   'sampling policy')
        self._policy = SamplingPolicyEnum(value)

    @property
    def mixture_components(self):
        """Gaussian-mixture components of the adaptive policy. Defaults to ``8``.

        :rtype: :class:`int <python:int>`
        """
        return self._mixture_components

    @mixture_components.setter
    def mixture_components(self, value):
        self._mixture_components = validators.integer(value,
                                                      allow_empty = False,
                                                      minimum = 1,
                                                      coerce_value = True)

    @property
    def refine_fraction(self):
        """Share of the budget spent on Sobol screening before the mixture is fitted.
        Defaults to ``0.5``.

        :rtype: :class:`float <python:float>`
        """
        return self._refine_fraction

    @refine_fraction.setter
    def refine_fraction(self, value):
        value = validators.float(value, allow_empty = False, maximum = 1.0)
        if value <= 0:
            raise errors.InvalidConfigurationError('refine_fraction must lie in (0, 1]')
        self._refine_fraction = value

    @property
    def batch_size(self):
        """Candidates generated (and dispatched to workers) at a time. Defaults to ``256``.

        :rtype: :class:`int <python:int>`
        """
        return self._batch_size

    @batch_size.setter
    def batch_size(self, value):
        self._batch_size = validators.integer(value,
                                              allow_empty = False,
                                              minimum = 1,
                                              coerce_value = True)


class SurrogateConfig(_ConfigBase):
    """Settings for classifier and regressor training."""

    _fields = ('svm_grid', 'krr_grid', 'k_folds', 'jitter_fraction',
               'max_training_points', 'max_regression_points', 'cheap_nodes')

    def __init__(self, **kwargs):
        self._svm_grid = {'reg_c': [1.0, 10.0, 100.0], 'rbf_gamma': [1.0, 4.0, 16.0]}
        self._krr_grid = {'rbf_gamma': [0.5, 2.0, 8.0],
                          'ridge_lambda': [1e-6, 1e-4, 1e-2]}
        self._k_folds = 2
        self._jitter_fraction = 0.01
        self._max_training_points = 2000
        self._max_regression_points = 600
        self._cheap_nodes = []

        super().__init__(**kwargs)

    @staticmethod
    def _validate_grid(value, keys):
        value = validators.dict(value, allow_empty = False)
        grid = {}
        for key in keys:
            if key not in value:
                raise errors.InvalidConfigurationError(f'hyperparameter grid needs "{key}"')
            entries = validators.iterable(value[key], allow_empty = False)
            entries = [validators.float(x, allow_empty = False) for x in entries]
            if min(entries) <= 0:
                raise errors.InvalidConfigurationError(f'"{key}" values must be positive')
            grid[key] = sorted(entries)
        return grid

    @property
    def svm_grid(self):
        """Grid over ``reg_c`` and ``rbf_gamma`` (gamma in standardized units).

        :rtype: :class:`dict <python:dict>`
        """
        return self._svm_grid

    @svm_grid.setter
    def svm_grid(self, value):
        self._svm_grid = self._validate_grid(value, ('reg_c', 'rbf_gamma'))

    @property
    def krr_grid(self):
        """Grid over ``rbf_gamma`` and ``ridge_lambda``.

        :rtype: :class:`dict <python:dict>`
        """
        return self._krr_grid

    @krr_grid.setter
    def krr_grid(self, value):
        self._krr_grid = self._validate_grid(value, ('rbf_gamma', 'ridge_lambda'))

    @property
    def k_folds(self):
        """Cross-validation folds. Defaults to ``2``.

        :rtype: :class:`int <python:int>`
        """
        return self._k_folds

    @k_folds.setter
    def k_folds(self, value):
        self._k_folds = validators.integer(value,
                                           allow_empty = False,
                                           minimum = 2,
                                           coerce_value = True)

    @property
    def jitter_fraction(self):
        """Standard deviation of the balancing jitter, as a fraction of each box width.
        Defaults to ``0.01``.

        :rtype: :class:`float <python:float>`
        """
        return self._jitter_fraction

    @jitter_fraction.setter
    def jitter_fraction(self, value):
        self._jitter_fraction = validators.float(value, allow_empty = False, minimum = 0)

    @property
    def max_training_points(self):
        """Cap on the balanced classifier training set. Defaults to ``2000``.

        :rtype: :class:`int <python:int>`
        """
        return self._max_training_points

    @max_training_points.setter
    def max_training_points(self, value):
        self._max_training_points = validators.integer(value,
                                                       allow_empty = False,
                                                       minimum = 4,
                                                       coerce_value = True)

    @property
    def max_regression_points(self):
        """Cap on the regressor training set. Defaults to ``600``.

        :rtype: :class:`int <python:int>`
        """
        return self._max_regression_points

    @max_regression_points.setter
    def max_regression_points(self, value):
        self._max_regression_points = validators.integer(value,
                                                         allow_empty = False,
                                                         minimum = 4,
                                                         coerce_value = True)

    @property
    def cheap_nodes(self):
        """Nodes whose true edge maps are used instead of trained regressors.

        :rtype: :class:`list <python:list>` of :class:`int <python:int>`
        """
        return self._cheap_nodes

    @cheap_nodes.setter
    def cheap_nodes(self, value):
        value = validators.iterable(value, allow_empty = True) or []
        self._cheap_nodes = sorted({validators.integer(x, minimum = 0, coerce_value = True)
                                    for x in value})


class NlpConfig(_ConfigBase):
    """Settings for the embedded coupling problems."""

    _fields = ('n_starts', 'tol', 'max_iter', 'penalty_weight', 'feas_tol', 'res_tol',
               'sibling_terms', 'coparent_terms')

    def __init__(self, **kwargs):
        self._n_starts = 10
        self._tol = 1e-8
        self._max_iter = 200
        self._penalty_weight = 1e3
        self._feas_tol = 1e-3
        self._res_tol = 1e-2
        self._sibling_terms = None
        self._coparent_terms = None

        super().__init__(**kwargs)

    @property
    def n_starts(self):
        """Multi-start count. Defaults to ``10``.

        :rtype: :class:`int <python:int>`
        """
        return self._n_starts

    @n_starts.setter
    def n_starts(self, value):
        self._n_starts = validators.integer(value,
                                            allow_empty = False,
                                            minimum = 1,
                                            coerce_value = True)

    @property
    def tol(self):
        """Projected-gradient tolerance. Defaults to ``1e-8``.

        :rtype: :class:`float <python:float>`
        """
        return self._tol

    @tol.setter
    def tol(self, value):
        self._tol = validators.float(value, allow_empty = False, minimum = 0)

    @property
    def max_iter(self):
        """Iteration cap per local solve. Defaults to ``200``.

        :rtype: :class:`int <python:int>`
        """
        return self._max_iter

    @max_iter.setter
    def max_iter(self, value):
        self._max_iter = validators.integer(value,
                                            allow_empty = False,
                                            minimum = 1,
                                            coerce_value = True)

    @property
    def penalty_weight(self):
        """Quadratic penalty weight on equality residuals. Defaults to ``1e3``.

        :rtype: :class:`float <python:float>`
        """
        return self._penalty_weight

    @penalty_weight.setter
    def penalty_weight(self, value):
        value = validators.float(value, allow_empty = False)
        if value <= 0:
            raise errors.InvalidConfigurationError('penalty_weight must be positive')
        self._penalty_weight = value

    @property
    def feas_tol(self):
        """Classifier value accepted as feasible. Defaults to ``1e-3``.

        :rtype: :class:`float <python:float>`
        """
        return self._feas_tol

    @feas_tol.setter
    def feas_tol(self, value):
        self._feas_tol = validators.float(value, allow_empty = False, minimum = 0)

    @property
    def res_tol(self):
        """Accepted equality residual, as a fraction of the input-box width.
        Defaults to ``1e-2``.

        :rtype: :class:`float <python:float>`
        """
        return self._res_tol

    @res_tol.setter
    def res_tol(self, value):
        self._res_tol = validators.float(value, allow_empty = False, minimum = 0)

    @staticmethod
    def _validate_toggle(value):
        if value is None or checkers.is_type(value, 'bool'):
            return value
        value = validators.string(value, allow_empty = False).lower()
        if value == 'auto':
            return None
        if value in ('true', 'on', 'yes'):
            return True
        if value in ('false', 'off', 'no'):
            return False
        raise errors.InvalidConfigurationError(f'value ({value}) is not auto/true/false')

    @property
    def sibling_terms(self):
        """Include sibling terms in forward coupling checks. ``None`` means *auto*:
        enabled when the in-neighbour has more than one child.

        :rtype: :class:`bool <python:bool>` / :obj:`None <python:None>`
        """
        return self._sibling_terms

    @sibling_terms.setter
    def sibling_terms(self, value):
        self._sibling_terms = self._validate_toggle(value)

    @property
    def coparent_terms(self):
        """Include co-parent terms in backward coupling checks. ``None`` means *auto*:
        enabled when the out-neighbour has more than one parent.

        :rtype: :class:`bool <python:bool>` / :obj:`None <python:None>`
        """
        return self._coparent_terms

    @coparent_terms.setter
    def coparent_terms(self, value):
        self._coparent_terms = self._validate_toggle(value)


DIRECTION_LETTERS = frozenset('fb')


def validate_directions(value):
    """Return ``value`` if it is a nonempty string over ``{f, b}``.

    :raises InvalidDirectionsError: otherwise
    """
    if not checkers.is_string(value) or not value:
        raise errors.InvalidDirectionsError('directions must be a nonempty string over {f, b}')
    value = value.strip().lower()
    if not value or set(value) - DIRECTION_LETTERS:
        raise errors.InvalidDirectionsError(f'directions must only hold "f" and "b". '
                                            f'Was: {value!r}')
    return value


class RunConfig(_ConfigBase):
    """A complete run: case study, pass directions, component settings, and seeds.

    Read from a YAML file with :meth:`from_yaml`; nested sections ``sampler``,
    ``surrogate``, ``nlp``, ``domain`` and ``reconstruction`` map onto the attributes of
    the same name.
    """

    _fields = ('case', 'graph', 'directions', 'seed', 'workers', 'output_dir', 'sampler',
               'surrogate', 'nlp', 'n_sobol', 'inflation', 'target_joint', 'budget')

    def __init__(self, **kwargs):
        self._case = 'linear5'
        self._graph = None
        self._directions = 'f'
        self._seed = 0
        self._workers = os.cpu_count() or 1
        self._output_dir = None
        self._sampler = SamplerConfig()
        self._surrogate = SurrogateConfig()
        self._nlp = NlpConfig()
        self._n_sobol = 8192
        self._inflation = 0.05
        self._target_joint = 2000
        self._budget = 1000000

        super().__init__(**kwargs)

    @property
    def case(self):
        """Name of a built-in case study. Defaults to ``'linear5'``.

        :rtype: :class:`str <python:str>`
        """
        return self._case

    @case.setter
    def case(self, value):
        from dag_feasibility.models import CASES

        value = validators.string(value, allow_empty = False)
        if value not in CASES:
            raise errors.UnknownCaseError(f'case ({value}) is not one of {sorted(CASES)}')
        self._case = value

    @property
    def graph(self):
        """Declaration of an affine graph that replaces the named case, if given.

        See :func:`dag_feasibility.models.affine_graph` for the layout.

        :rtype: :class:`dict <python:dict>` / :obj:`None <python:None>`
        """
        return self._graph

    @graph.setter
    def graph(self, value):
        self._graph = validators.dict(value, allow_empty = True) or None

    def build_graph(self):
        """Return the graph this run works on.

        :rtype: :class:`GraphSpec <dag_feasibility.graph.GraphSpec>`
        """
        from dag_feasibility.models import affine_graph, get_case

        if self._graph:
            return affine_graph(self._graph)
        return get_case(self._case)

    @property
    def directions(self):
        """Pass directions, e.g. ``'f'``, ``'fb'``, ``'bfb'``. Defaults to ``'f'``.

        :rtype: :class:`str <python:str>`
        """
        return self._directions

    @directions.setter
    def directions(self, value):
        self._directions = validate_directions(value)

    @property
    def seed(self):
        """Run seed from which every named sub-seed is derived. Defaults to ``0``.

        :rtype: :class:`int <python:int>`
        """
        return self._seed

    @seed.setter
    def seed(self, value):
        self._seed = validators.integer(value,
                                        allow_empty = False,
                                        minimum = 0,
                                        coerce_value = True)

    @property
    def workers(self):
        """Worker threads for candidate evaluation. Defaults to one per available core.

        :rtype: :class:`int <python:int>`
        """
        return self._workers

    @workers.setter
    def workers(self, value):
        value = validators.integer(value, allow_empty = True, minimum = 1, coerce_value = True)
        self._workers = value or (os.cpu_count() or 1)

    @property
    def output_dir(self):
        """Directory into which results are written.

        :rtype: :class:`str <python:str>` / :obj:`None <python:None>`
        """
        return self._output_dir

    @output_dir.setter
    def output_dir(self, value):
        self._output_dir = validators.string(value, allow_empty = True, coerce_value = True)

    @property
    def sampler(self):
        """:rtype: :class:`SamplerConfig`"""
        return self._sampler

    @sampler.setter
    def sampler(self, value):
        self._sampler = value if isinstance(value, SamplerConfig) else \
            SamplerConfig.from_dict(value)

    @property
    def surrogate(self):
        """:rtype: :class:`SurrogateConfig`"""
        return self._surrogate

    @surrogate.setter
    def surrogate(self, value):
        self._surrogate = value if isinstance(value, SurrogateConfig) else \
            SurrogateConfig.from_dict(value)

    @property
    def nlp(self):
        """:rtype: :class:`NlpConfig`"""
        return self._nlp

    @nlp.setter
    def nlp(self, value):
        self._nlp = value if isinstance(value, NlpConfig) else NlpConfig.from_dict(value)

    @property
    def n_sobol(self):
        """Sobol points used to estimate backward input domains. Defaults to ``8192``.

        :rtype: :class:`int <python:int>`
        """
        return self._n_sobol

    @n_sobol.setter
    def n_sobol(self, value):
        self._n_sobol = validators.integer(value,
                                           allow_empty = False,
                                           minimum = 2,
                                           coerce_value = True)

    @property
    def inflation(self):
        """Relative inflation applied to every interval hull. Defaults to ``0.05``.

        :rtype: :class:`float <python:float>`
        """
        return self._inflation

    @inflation.setter
    def inflation(self, value):
        self._inflation = validators.float(value, allow_empty = False, minimum = 0)

    @property
    def target_joint(self):
        """Joint feasible samples sought by reconstruction and the baseline.
        Defaults to ``2000``.

        :rtype: :class:`int <python:int>`
        """
        return self._target_joint

    @target_joint.setter
    def target_joint(self, value):
        self._target_joint = validators.integer(value,
                                                allow_empty = False,
                                                minimum = 1,
                                                coerce_value = True)

    @property
    def budget(self):
        """Constituent-evaluation budget of reconstruction and the baseline.
        Defaults to ``1000000``.

        :rtype: :class:`int <python:int>`
        """
        return self._budget

    @budget.setter
    def budget(self, value):
        self._budget = validators.integer(value,
                                          allow_empty = False,
                                          minimum = 1,
                                          coerce_value = True)

    def to_dict(self):
        as_dict = super().to_dict()
        nested = {
            'domain': {'n_sobol': as_dict.pop('n_sobol'),
                       'inflation': as_dict.pop('inflation')},
            'reconstruction': {'target': as_dict.pop('target_joint'),
                               'budget': as_dict.pop('budget')},
        }
        as_dict.update(nested)
        return as_dict

    @classmethod
    def from_dict(cls, as_dict):
        as_dict = dict(validators.dict(as_dict, allow_empty = True) or {})
        domain = validators.dict(as_dict.pop('domain', None), allow_empty = True) or {}
        reconstruction = validators.dict(as_dict.pop('reconstruction', None),
                                         allow_empty = True) or {}
        if 'n_sobol' in domain:
            as_dict['n_sobol'] = domain['n_sobol']
        if 'inflation' in domain:
            as_dict['inflation'] = domain['inflation']
        if 'target' in reconstruction:
            as_dict['target_joint'] = reconstruction['target']
        if 'budget' in reconstruction:
            as_dict['budget'] = reconstruction['budget']

        return cls(**as_dict)

    def copy(self, **overrides):
        as_dict = self.to_dict()
        instance = self.__class__.from_dict(as_dict)
        for key, value in overrides.items():
            if value is not None:
                if key not in self._fields:
                    raise errors.InvalidConfigurationError(f'RunConfig has no setting "{key}"')
                setattr(instance, key, value)
        return instance

    @classmethod
    def from_yaml(cls, path):
        """Read a configuration file.

        :param path: Path to a YAML file.
        :type path: Path-like

        :rtype: :class:`RunConfig`

        :raises InvalidConfigurationError: if the file does not hold a mapping
        """
        if not checkers.is_file(path):
            raise FileNotFoundError(f'no configuration file at {path}')
        with open(path, 'r') as file_:
            as_dict = yaml.safe_load(file_)
        if as_dict is None:
            as_dict = {}
        if not checkers.is_dict(as_dict):
            raise errors.InvalidConfigurationError(f'{path} does not hold a mapping')

        return cls.from_dict(as_dict)

    def to_yaml(self, path = None):
        """Serialize to YAML, writing to ``path`` when given.

        :rtype: :class:`str <python:str>`
        """
        as_yaml = yaml.safe_dump(self.to_dict(), sort_keys = True)
        if path:
            with open(path, 'w') as file_:
                file_.write(as_yaml)
        return as_yaml

    def propagation_settings(self):
        """Settings that determine a propagation state's content."""
        as_dict = self.to_dict()
        return {
            'case': as_dict['case'],
            'graph': as_dict['graph'],
            'directions': as_dict['directions'],
            'seed': as_dict['seed'],
            'sampler': as_dict['sampler'],
            'surrogate': as_dict['surrogate'],
            'nlp': as_dict['nlp'],
            'domain': as_dict['domain'],
        }

    @property
    def config_hash(self):
        """SHA-256 of the canonical JSON of :meth:`propagation_settings`.

        :rtype: :class:`str <python:str>`
        """
        canonical = json.dumps(self.propagation_settings(),
                               sort_keys = True,
                               separators = (',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
