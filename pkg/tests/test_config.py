"""Tests for pipeline configuration and seed derivation."""

import json

import pytest

from config import (
    DiscoveryConfig, TrainConfig, UQConfig, derive_seed, load_pipeline_config,
)
from errors import UsageError


def _write(tmp_path, content):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(content), encoding='utf-8')
    return str(path)


def test_profile_defaults():
    config = load_pipeline_config(profile='standard', seed=3)
    assert config.train.hidden_units == 32
    assert config.train.layers == 2
    assert config.train.dropout_rate == 0.2
    assert config.uq.ensemble_size == 200
    assert config.discovery.inclusion_threshold == 0.2
    assert config.seed == 3
    assert config.train.seed == 3 and config.discovery.seed == 3

    deep = load_pipeline_config(profile='deep')
    assert deep.train.layers == 3
    assert deep.train.batch_size == 128
    assert deep.train.lr_plateau_factor == 0.95


def test_file_overrides_profile_and_flags_override_file(tmp_path):
    path = _write(tmp_path, {
        'seed': 5,
        'jobs': 2,
        'train': {'epochs': 7},
        'uq': {'ensemble_size': 11},
        'task_overrides': {'V4+V5': {'hidden_units': 8}},
    })
    config = load_pipeline_config(path)
    assert config.train.epochs == 7
    assert config.train.hidden_units == 32
    assert config.uq.ensemble_size == 11
    assert config.seed == 5 and config.jobs == 2

    flagged = load_pipeline_config(path, seed=9, jobs=1, output_dir=str(tmp_path / 'out'))
    assert flagged.seed == 9 and flagged.train.seed == 9
    assert flagged.jobs == 1
    assert flagged.output_dir == str(tmp_path / 'out')

    assert config.train_config_for('V4+V5').hidden_units == 8
    assert config.train_config_for('V6').hidden_units == 32


def test_unknown_keys_are_usage_errors(tmp_path):
    with pytest.raises(UsageError, match='Unknown config keys'):
        load_pipeline_config(_write(tmp_path, {'learning': 1}))
    with pytest.raises(UsageError, match="section 'train'"):
        load_pipeline_config(_write(tmp_path, {'train': {'hidden': 4}}))
    with pytest.raises(UsageError, match='task'):
        load_pipeline_config(_write(tmp_path, {'task_overrides': {'V6': {'units': 4}}}))


def test_bad_values_are_usage_errors(tmp_path):
    with pytest.raises(UsageError):
        load_pipeline_config(profile='nope')
    with pytest.raises(UsageError):
        load_pipeline_config(str(tmp_path / 'missing.json'))
    with pytest.raises(UsageError):
        load_pipeline_config(jobs=0)
    with pytest.raises(UsageError):
        DiscoveryConfig(alpha=1.0)
    with pytest.raises(UsageError):
        DiscoveryConfig(ci_method='bootstrap')
    with pytest.raises(UsageError):
        TrainConfig(dropout_rate=1.0)
    with pytest.raises(UsageError):
        UQConfig(level=0.0)


def test_invalid_json_file(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text('{not json', encoding='utf-8')
    with pytest.raises(UsageError, match='not valid JSON'):
        load_pipeline_config(str(path))


def test_derive_seed():
    assert derive_seed(0, 'init', 'V6') == derive_seed(0, 'init', 'V6')
    assert derive_seed(0, 'init', 'V6') != derive_seed(0, 'init', 'V5')
    assert derive_seed(0, 'init', 'V6') != derive_seed(1, 'init', 'V6')
    assert derive_seed(0, 'pass', 1) != derive_seed(0, 'pass', 2)
    assert 0 <= derive_seed(123, 'x') < 2 ** 32
