"""Shared fixtures for the pipeline tests."""

import json
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add repository root to path so the flat modules import as in pipeline.py
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from discovery import CausalGraph  # noqa: E402
from semgen import Mechanism, SemSpec  # noqa: E402

SIX_NODE_EDGES = [
    ('V1', 'V3'), ('V1', 'V4'), ('V1', 'V5'),
    ('V2', 'V4'), ('V2', 'V5'), ('V2', 'V6'),
    ('V3', 'V6'), ('V5', 'V6'),
]


def build_graph(nodes, edges, root=None):
    graph = CausalGraph(list(nodes), root)
    for a, b in edges:
        graph.add_directed(a, b)
    return graph


def fixed_sem(dag, seed, gain=0.3, noise=0.2, length=300):
    """Linear SEM with unit coefficients; only the root's children are U-modulated."""
    mechanisms = {}
    for node in dag.nodes:
        if node == dag.root:
            continue
        parents = sorted(dag.parents(node))
        mechanisms[node] = Mechanism('linear', {p: 1.0 for p in parents},
                                     gain if dag.root in parents else 0.0)
    return SemSpec(dag, mechanisms, {n: noise for n in mechanisms}, length, seed)


@pytest.fixture
def six_node_graph():
    """Six-node DAG used throughout the decomposition examples."""
    return build_graph([f"V{i}" for i in range(1, 7)], SIX_NODE_EDGES)


@pytest.fixture
def chain_graph():
    return build_graph(['V1', 'V2', 'V3'], [('V1', 'V2'), ('V2', 'V3')])


@pytest.fixture
def write_manifest(tmp_path):
    """Write CSV experiments plus a manifest; returns the manifest path."""
    def _write(frames, nodes, split=None, name='manifest.json'):
        entries = []
        for experiment_id, frame in frames.items():
            path = f"{experiment_id}.csv"
            frame.to_csv(tmp_path / path, index=False)
            entries.append({'id': experiment_id, 'path': path})
        manifest = {'nodes': nodes, 'experiments': entries}
        if split is not None:
            manifest['split'] = split
        manifest_path = tmp_path / name
        manifest_path.write_text(json.dumps(manifest), encoding='utf-8')
        return str(manifest_path)
    return _write


@pytest.fixture
def chain_nodes():
    return [
        {'name': 'U', 'columns': ['u'], 'role': 'root'},
        {'name': 'V1', 'columns': ['v1'], 'role': 'intermediate'},
        {'name': 'V2', 'columns': ['v2a', 'v2b'], 'kind': 'vector', 'role': 'leaf'},
    ]


@pytest.fixture
def chain_frames():
    """Three short experiments of a noisy chain U -> V1 -> V2."""
    frames = {}
    for k in range(3):
        rng = np.random.default_rng(k)
        t = np.linspace(0.0, 1.0, 30)
        u = t + 0.1 * k
        v1 = np.sin(3.0 * u) + 0.05 * rng.standard_normal(30)
        frames[f"exp{k}"] = pd.DataFrame({
            'u': u,
            'v1': v1,
            'v2a': 0.5 * v1 + 0.05 * rng.standard_normal(30),
            'v2b': v1 ** 2 + 0.05 * rng.standard_normal(30),
        })
    return frames
