"""Tests for the synthetic structural-equation generator."""

import itertools
import json
import os

import networkx as nx
import numpy as np
import pytest

from conftest import build_graph, fixed_sem
from dataset import load_manifest
from errors import DataError
from kernels import kci_test
from semgen import (
    ROOT, d_separated, random_dag, random_sem, sem_schema, simulate, simulate_lagged,
    write_experiment_set,
)


def test_random_dag_is_rooted_and_acyclic():
    for seed in range(10):
        dag = random_dag(6, 0.5, seed)
        assert dag.root == ROOT
        assert not dag.parents(ROOT)
        assert nx.is_directed_acyclic_graph(dag.to_networkx())
        assert len(dag.nodes) == 6


def test_random_dag_is_seeded():
    assert random_dag(5, 0.5, 3).directed == random_dag(5, 0.5, 3).directed


def test_random_dag_input_checks():
    with pytest.raises(DataError):
        random_dag(1, 0.5, 0)
    with pytest.raises(DataError):
        random_dag(4, 1.5, 0)


def test_d_separation_on_chain_and_collider():
    chain = build_graph(['A', 'B', 'C'], [('A', 'B'), ('B', 'C')])
    assert not d_separated(chain, 'A', 'C', [])
    assert d_separated(chain, 'A', 'C', ['B'])

    collider = build_graph(['A', 'B', 'C'], [('A', 'B'), ('C', 'B')])
    assert d_separated(collider, 'A', 'C', [])
    assert not d_separated(collider, 'A', 'C', ['B'])


def test_simulate_is_deterministic_and_root_is_noise_free():
    dag = build_graph(['U', 'V1', 'V2'], [('U', 'V1'), ('V1', 'V2')], root='U')
    spec = random_sem(dag, seed=4, length=50)
    first, second = simulate(spec), simulate(spec)
    for node in dag.nodes:
        np.testing.assert_array_equal(first.series[node], second.series[node])
    assert first.id == 'sem-4'
    assert first.length == 50
    t = np.arange(50) / 50.0
    np.testing.assert_allclose(first.series['U'][:, 0], t + 0.5 * np.sin(4.0 * np.pi * t))


def test_node_without_parents_is_pure_noise():
    dag = build_graph(['U', 'V1'], [], root='U')
    spec = random_sem(dag, seed=0, noise_scale=0.3, length=400)
    values = simulate(spec).series['V1'][:, 0]
    assert abs(values.std() - 0.3) < 0.05


def test_simulate_lagged_uses_previous_step():
    dag = build_graph(['U', 'V1', 'V2'], [('U', 'V1')], root='U')
    spec = random_sem(dag, seed=1, kind='linear', noise_scale=0.0, length=20)
    spec.mechanisms['V2'].gain = 0.0
    experiment = simulate_lagged(spec, {'V2': {'V1': 2.0}})
    v1, v2 = experiment.series['V1'][:, 0], experiment.series['V2'][:, 0]
    assert v2[0] == 0.0
    np.testing.assert_allclose(v2[1:], 2.0 * v1[:-1])


def test_sem_schema_roles():
    dag = build_graph(['U', 'V1', 'V2'], [('U', 'V1'), ('V1', 'V2')], root='U')
    roles = {n.name: n.role for n in sem_schema(dag)}
    assert roles == {'U': 'root', 'V1': 'intermediate', 'V2': 'leaf'}


def test_write_experiment_set_roundtrip(tmp_path):
    dag = build_graph(['U', 'V1', 'V2'], [('U', 'V1'), ('V1', 'V2')], root='U')
    specs = [random_sem(dag, seed=s, length=30) for s in range(4)]
    manifest_path = write_experiment_set(specs, str(tmp_path / 'data'), calibration_fraction=0.5)

    data = load_manifest(manifest_path)
    assert data.calibration == ['exp000', 'exp001']
    assert data.test == ['exp002', 'exp003']
    assert os.path.exists(data.truth_path)
    with open(data.truth_path, encoding='utf-8') as f:
        truth = json.load(f)
    assert {(e['from'], e['to']) for e in truth['dag']['edges']} == dag.directed

    expected = simulate(specs[2]).series['V2']
    np.testing.assert_allclose(data.get('exp002').series['V2'], expected, rtol=1e-12, atol=1e-12)


def test_only_root_children_are_modulated():
    dag = build_graph(['U', 'V1', 'V2', 'V3'], [('U', 'V1'), ('V1', 'V2'), ('U', 'V3'), ('V2', 'V3')],
                      root='U')
    for seed in range(5):
        spec = random_sem(dag, seed=seed, max_gain=0.5)
        assert spec.mechanisms['V2'].gain == 0.0
        assert abs(spec.mechanisms['V1'].gain) <= 0.5
        assert abs(spec.mechanisms['V3'].gain) <= 0.5


def test_node_noises_are_independent():
    dag = random_dag(5, 0.0, seed=2)
    spec = random_sem(dag, seed=7, noise_scale=1.0, length=1000)
    experiment = simulate(spec)
    others = [n for n in dag.nodes if n != ROOT]
    series = np.column_stack([experiment.series[n][:, 0] for n in others])
    correlation = np.corrcoef(series, rowvar=False)
    off_diagonal = correlation[~np.eye(len(others), dtype=bool)]
    assert np.all(np.abs(off_diagonal) < 0.15)


CHAIN = build_graph(['U', 'V1', 'V2'], [('U', 'V1'), ('V1', 'V2')], root='U')
COLLIDER = build_graph(['U', 'V1', 'V2'], [('U', 'V2'), ('V1', 'V2')], root='U')


def _separating_sets(dag):
    """Every non-adjacent pair with one set that d-separates it in the DAG."""
    found = []
    for a, b in itertools.combinations(dag.nodes, 2):
        if dag.adjacent(a, b):
            continue
        others = [n for n in dag.nodes if n not in (a, b)]
        for size in range(len(others) + 1):
            sets = [c for c in itertools.combinations(others, size) if d_separated(dag, a, b, c)]
            if sets:
                found.append((a, b, sets[0]))
                break
    return found


@pytest.mark.slow
@pytest.mark.parametrize('dag', [CHAIN, COLLIDER], ids=['chain', 'collider'])
def test_generated_data_is_faithful_to_its_dag(dag):
    """Every edge is a detectable dependence; every d-separation is an independence."""
    separations = _separating_sets(dag)
    assert separations
    accepted = 0
    for seed in range(5):
        experiment = simulate(fixed_sem(dag, seed))
        for a, b in sorted(dag.directed):
            assert not kci_test(experiment.series[a], experiment.series[b]).independent
        for a, b, cond in separations:
            z = experiment.block(cond) if cond else None
            accepted += kci_test(experiment.series[a], experiment.series[b], z, alpha=0.01).independent
    assert accepted >= 4 * len(separations)


@pytest.mark.slow
def test_conditioning_on_a_collider_creates_dependence():
    experiment = simulate(fixed_sem(COLLIDER, seed=3))
    result = kci_test(experiment.series['U'], experiment.series['V1'], experiment.series['V2'])
    assert not result.independent
