"""
***********************************
tests.test_config
***********************************

Tests for the run configuration objects and their YAML representation.

"""
import os

import pytest
import yaml

from dag_feasibility import errors
from dag_feasibility.config import (SamplerConfig, SurrogateConfig, NlpConfig, RunConfig,
                                    SamplingPolicyEnum, validate_directions)

from tests.fixtures import CHAIN_DECLARATION


def test_SamplerConfig_defaults():
    config = SamplerConfig()
    assert config.target_feasible == 500
    assert config.max_evaluations == 20000
    assert config.policy == SamplingPolicyEnum.SOBOL_REJECTION
    assert config.mixture_components == 8
    assert config.refine_fraction == 0.5
    assert config.to_dict()['policy'] == 'sobol_rejection'


@pytest.mark.parametrize('kwargs, error', [
    ({'target_feasible': 10, 'max_evaluations': 100}, None),
    ({'policy': 'ADAPTIVE_MIXTURE'}, None),
    ({'target_feasible': 200, 'max_evaluations': 100}, errors.InvalidConfigurationError),
    ({'policy': 'latin_hypercube'}, errors.InvalidConfigurationError),
    ({'refine_fraction': 0.0}, errors.InvalidConfigurationError),
    ({'refine_fraction': 1.5}, ValueError),
    ({'target_feasible': 0}, ValueError),
    ({'samples': 10}, errors.InvalidConfigurationError),
])
def test_SamplerConfig(kwargs, error):
    if not error:
        result = SamplerConfig(**kwargs)
        for key, value in kwargs.items():
            if key == 'policy':
                assert result.policy.value == value.lower()
            else:
                assert getattr(result, key) == value
    else:
        with pytest.raises(error):
            result = SamplerConfig(**kwargs)


def test_SamplerConfig_copy():
    config = SamplerConfig(target_feasible = 10, max_evaluations = 100)
    copied = config.copy(seed = 4)
    assert copied.seed == 4
    assert copied.target_feasible == 10
    assert config.seed == 0
    assert SamplerConfig.from_dict(copied.to_dict()) == copied


@pytest.mark.parametrize('kwargs, error', [
    ({'svm_grid': {'reg_c': [10.0, 1.0], 'rbf_gamma': [2.0]}}, None),
    ({'svm_grid': {'reg_c': [1.0]}}, errors.InvalidConfigurationError),
    ({'krr_grid': {'rbf_gamma': [1.0], 'ridge_lambda': [-1.0]}},
     errors.InvalidConfigurationError),
    ({'k_folds': 1}, ValueError),
    ({'cheap_nodes': [3, 1, 3]}, None),
])
def test_SurrogateConfig(kwargs, error):
    if not error:
        result = SurrogateConfig(**kwargs)
        if 'svm_grid' in kwargs:
            assert result.svm_grid['reg_c'] == [1.0, 10.0]
        if 'cheap_nodes' in kwargs:
            assert result.cheap_nodes == [1, 3]
    else:
        with pytest.raises(error):
            result = SurrogateConfig(**kwargs)


@pytest.mark.parametrize('value, expected, error', [
    (None, None, None),
    ('auto', None, None),
    (True, True, None),
    ('on', True, None),
    ('Yes', True, None),
    (False, False, None),
    ('off', False, None),
    ('sometimes', None, errors.InvalidConfigurationError),
])
def test_NlpConfig_toggles(value, expected, error):
    if not error:
        result = NlpConfig(sibling_terms = value, coparent_terms = value)
        assert result.sibling_terms is expected
        assert result.coparent_terms is expected
    else:
        with pytest.raises(error):
            result = NlpConfig(sibling_terms = value)


def test_NlpConfig():
    config = NlpConfig()
    assert config.n_starts == 10
    assert config.penalty_weight == 1e3
    assert config.feas_tol == 1e-3
    with pytest.raises(errors.InvalidConfigurationError):
        NlpConfig(penalty_weight = 0)


@pytest.mark.parametrize('value, expected, error', [
    ('f', 'f', None),
    ('FB', 'fb', None),
    ('bfb', 'bfb', None),
    (' ff ', 'ff', None),
    ('', None, errors.InvalidDirectionsError),
    ('fx', None, errors.InvalidDirectionsError),
    (None, None, errors.InvalidDirectionsError),
    (3, None, errors.InvalidDirectionsError),
])
def test_validate_directions(value, expected, error):
    if not error:
        result = validate_directions(value)
        assert result == expected
    else:
        with pytest.raises(error):
            result = validate_directions(value)


def test_RunConfig_defaults():
    config = RunConfig()
    assert config.case == 'linear5'
    assert config.directions == 'f'
    assert config.workers == (os.cpu_count() or 1)
    assert config.n_sobol == 8192
    assert config.inflation == 0.05
    assert config.target_joint == 2000
    assert config.budget == 1000000
    assert config.build_graph().name == 'linear5'


@pytest.mark.parametrize('kwargs, error', [
    ({'case': 'reactors'}, None),
    ({'case': 'distillation'}, errors.UnknownCaseError),
    ({'directions': 'fbz'}, errors.InvalidDirectionsError),
    ({'sampler': {'target_feasible': 5, 'max_evaluations': 10}}, None),
    ({'sampler': {'bogus': 1}}, errors.InvalidConfigurationError),
    ({'inflation': -0.1}, ValueError),
    ({'unknown_key': 1}, errors.InvalidConfigurationError),
])
def test_RunConfig(kwargs, error):
    if not error:
        result = RunConfig(**kwargs)
        assert result is not None
    else:
        with pytest.raises(error):
            result = RunConfig(**kwargs)


def test_RunConfig_workers():
    assert RunConfig(workers = 3).workers == 3
    assert RunConfig(workers = None).workers == (os.cpu_count() or 1)
    with pytest.raises(ValueError):
        RunConfig(workers = 0)


def test_RunConfig_nested_sections():
    config = RunConfig.from_dict({
        'case': 'linear5',
        'domain': {'n_sobol': 256, 'inflation': 0.1},
        'reconstruction': {'target': 50, 'budget': 5000},
        'sampler': {'target_feasible': 20, 'max_evaluations': 400},
    })
    assert config.n_sobol == 256
    assert config.inflation == 0.1
    assert config.target_joint == 50
    assert config.budget == 5000
    assert config.sampler.target_feasible == 20

    as_dict = config.to_dict()
    assert as_dict['domain'] == {'n_sobol': 256, 'inflation': 0.1}
    assert as_dict['reconstruction'] == {'target': 50, 'budget': 5000}
    assert 'n_sobol' not in as_dict


def test_RunConfig_yaml(tmp_path):
    config = RunConfig(graph = CHAIN_DECLARATION,
                       directions = 'fb',
                       seed = 7,
                       sampler = SamplerConfig(target_feasible = 30, max_evaluations = 600))
    path = str(tmp_path / 'run.yaml')
    as_yaml = config.to_yaml(path)
    assert os.path.exists(path)
    assert yaml.safe_load(as_yaml)['directions'] == 'fb'

    loaded = RunConfig.from_yaml(path)
    assert loaded == config
    assert loaded.config_hash == config.config_hash
    assert loaded.build_graph().name == 'chain'


def test_RunConfig_from_yaml_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        RunConfig.from_yaml(str(tmp_path / 'missing.yaml'))

    path = tmp_path / 'list.yaml'
    path.write_text('- a\n- b\n')
    with pytest.raises(errors.InvalidConfigurationError):
        RunConfig.from_yaml(str(path))

    empty = tmp_path / 'empty.yaml'
    empty.write_text('')
    assert RunConfig.from_yaml(str(empty)) == RunConfig()


def test_config_hash():
    config = RunConfig(seed = 3)
    assert len(config.config_hash) == 64

    unaffected = config.copy(workers = 4, output_dir = 'elsewhere', target_joint = 7,
                             budget = 99)
    assert unaffected.config_hash == config.config_hash

    for overrides in ({'seed': 4},
                      {'directions': 'fb'},
                      {'inflation': 0.2},
                      {'sampler': {'target_feasible': 10, 'max_evaluations': 100}}):
        assert config.copy(**overrides).config_hash != config.config_hash


def test_RunConfig_copy_rejects_unknown_keys():
    with pytest.raises(errors.InvalidConfigurationError):
        RunConfig().copy(samples = 10)


@pytest.mark.parametrize('filename, expected_graph, expected_directions', [
    ('linear5.yaml', 'linear5', 'fb'),
    ('chain.yaml', 'chain', 'f'),
])
def test_shipped_configs(filename, expected_graph, expected_directions):
    path = os.path.join(os.path.dirname(__file__), '..', 'configs', filename)
    config = RunConfig.from_yaml(path)
    assert config.build_graph().name == expected_graph
    assert config.directions == expected_directions
