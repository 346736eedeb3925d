"""Tests for manifest loading and normalization."""

import json

import numpy as np
import pandas as pd
import pytest

from dataset import (
    Experiment, NodeSchema, Normalizer, apply_normalizer, fit_normalizer,
    invert_normalizer, load_manifest, read_experiment_csv,
)
from errors import DataError


def test_load_manifest_groups_columns_into_nodes(write_manifest, chain_frames, chain_nodes):
    """Vector nodes collect their columns in manifest order."""
    path = write_manifest(chain_frames, chain_nodes, split={'calibration': ['exp0', 'exp1'], 'test': ['exp2']})
    data = load_manifest(path)

    assert len(data.experiments) == 3
    assert data.node_names == ['U', 'V1', 'V2']
    assert data.root == 'U'
    assert data.calibration == ['exp0', 'exp1']
    assert data.test == ['exp2']
    v2 = data.get('exp1').series['V2']
    assert v2.shape == (30, 2)
    np.testing.assert_allclose(v2[:, 0], chain_frames['exp1']['v2a'].to_numpy())


def test_missing_split_puts_everything_in_calibration(write_manifest, chain_frames, chain_nodes):
    data = load_manifest(write_manifest(chain_frames, chain_nodes))
    assert data.calibration == ['exp0', 'exp1', 'exp2']
    assert data.test == []


def test_empty_experiment_list(tmp_path, chain_nodes):
    path = tmp_path / 'manifest.json'
    path.write_text(json.dumps({'nodes': chain_nodes, 'experiments': []}), encoding='utf-8')
    with pytest.raises(DataError, match='empty experiment list'):
        load_manifest(str(path))


def test_duplicate_experiment_ids(tmp_path, chain_frames, chain_nodes):
    chain_frames['exp0'].to_csv(tmp_path / 'a.csv', index=False)
    manifest = {'nodes': chain_nodes, 'experiments': [{'id': 'x', 'path': 'a.csv'}, {'id': 'x', 'path': 'a.csv'}]}
    path = tmp_path / 'manifest.json'
    path.write_text(json.dumps(manifest), encoding='utf-8')
    with pytest.raises(DataError, match='Duplicate'):
        load_manifest(str(path))


def test_overlapping_split_is_rejected(write_manifest, chain_frames, chain_nodes):
    path = write_manifest(chain_frames, chain_nodes,
                          split={'calibration': ['exp0', 'exp1'], 'test': ['exp1', 'exp2']})
    with pytest.raises(DataError, match='overlap'):
        load_manifest(path)


def test_schema_needs_exactly_one_root(write_manifest, chain_frames, chain_nodes):
    chain_nodes[1]['role'] = 'root'
    with pytest.raises(DataError, match='role=root'):
        load_manifest(write_manifest(chain_frames, chain_nodes))


def test_non_numeric_cell_reports_line(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text("u,v\n1,2\n3,abc\n", encoding='utf-8')
    schema = [NodeSchema('U', ('u',), role='root'), NodeSchema('V', ('v',), role='leaf')]
    with pytest.raises(DataError, match=r'bad\.csv:3: non-numeric'):
        read_experiment_csv(str(path), schema, 'bad')


def test_missing_column(tmp_path):
    path = tmp_path / 'short.csv'
    path.write_text("u\n1\n2\n", encoding='utf-8')
    schema = [NodeSchema('U', ('u',), role='root'), NodeSchema('V', ('v',), role='leaf')]
    with pytest.raises(DataError, match='absent from CSV'):
        read_experiment_csv(str(path), schema, 'short')


def test_single_row_is_too_short(tmp_path):
    path = tmp_path / 'one.csv'
    path.write_text("u,v\n1,2\n", encoding='utf-8')
    schema = [NodeSchema('U', ('u',), role='root'), NodeSchema('V', ('v',), role='leaf')]
    with pytest.raises(DataError, match='series too short'):
        read_experiment_csv(str(path), schema, 'one')


def test_scalar_node_with_two_columns_is_rejected():
    with pytest.raises(DataError):
        NodeSchema('V', ('a', 'b'), kind='scalar')


def _dataset(values_by_experiment):
    from dataset import ExperimentSet
    schema = [NodeSchema('U', ('u',), role='root'), NodeSchema('V', ('v',), role='leaf')]
    experiments = [
        Experiment(f"e{i}", {'U': np.arange(len(v), dtype=float), 'V': np.asarray(v, dtype=float)})
        for i, v in enumerate(values_by_experiment)
    ]
    ids = [e.id for e in experiments]
    return ExperimentSet(experiments, schema, ids, [])


def test_fit_normalizer_uses_population_std():
    """Values {1, 2, 3} pooled over two experiments: mean 2, std sqrt(2/3)."""
    data = _dataset([[1.0, 2.0], [3.0, 2.0]])
    normalizer = fit_normalizer(data, ['e0', 'e1'])
    assert normalizer.mean['V'][0] == pytest.approx(2.0)
    assert normalizer.std['V'][0] == pytest.approx(np.sqrt(0.5))

    data = _dataset([[1.0, 2.0, 3.0]])
    normalizer = fit_normalizer(data, ['e0'])
    assert normalizer.std['V'][0] == pytest.approx(np.sqrt(2.0 / 3.0))


def test_constant_column_gets_unit_std_and_warning():
    data = _dataset([[5.0, 5.0, 5.0]])
    normalizer = fit_normalizer(data, ['e0'])
    assert normalizer.mean['V'][0] == 5.0
    assert normalizer.std['V'][0] == 1.0
    assert any("'V'" in w for w in normalizer.warnings)


def test_normalize_and_invert():
    normalizer = Normalizer({'V': np.array([2.0])}, {'V': np.array([2.0])})
    assert normalizer.normalize('V', np.array([[4.0]]))[0, 0] == 1.0

    data = _dataset([[0.3, 1.7, -2.0, 4.5]])
    fitted = fit_normalizer(data, ['e0'])
    normalized = apply_normalizer(fitted, data.get('e0'))
    assert abs(normalized.series['V'].mean()) < 1e-9
    assert abs(normalized.series['V'].std() - 1.0) < 1e-9
    restored = invert_normalizer(fitted, normalized)
    np.testing.assert_allclose(restored.series['V'], data.get('e0').series['V'], atol=1e-10)


def test_normalizer_column_mismatch():
    normalizer = Normalizer({'V': np.zeros(2)}, {'V': np.ones(2)})
    with pytest.raises(DataError, match='Column-count mismatch'):
        normalizer.normalize('V', np.zeros((4, 3)))


def test_experiment_rejects_non_finite_values():
    with pytest.raises(DataError, match='non-finite'):
        Experiment('e', {'U': np.array([0.0, np.nan, 1.0])})


def test_experiment_rejects_unequal_lengths():
    with pytest.raises(DataError, match='differing lengths'):
        Experiment('e', {'U': np.zeros(3), 'V': np.zeros(4)})


def test_block_concatenates_columns():
    experiment = Experiment('e', {'A': np.zeros((5, 2)), 'B': np.ones(5)})
    block = experiment.block(['A', 'B'])
    assert block.shape == (5, 3)
    assert np.all(block[:, 2] == 1.0)
    with pytest.raises(DataError):
        experiment.block(['C'])


def test_frame_roundtrip_through_csv(tmp_path):
    from dataset import write_experiment_csv
    schema = [NodeSchema('U', ('u',), role='root'), NodeSchema('V', ('v1', 'v2'), 'vector', 'leaf')]
    experiment = Experiment('e', {'U': np.linspace(0, 1, 4), 'V': np.arange(8, dtype=float).reshape(4, 2)})
    path = tmp_path / 'e.csv'
    write_experiment_csv(experiment, schema, str(path))
    assert list(pd.read_csv(path).columns) == ['u', 'v1', 'v2']
    again = read_experiment_csv(str(path), schema, 'e')
    np.testing.assert_array_equal(again.series['V'], experiment.series['V'])
