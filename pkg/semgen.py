#!/usr/bin/env python3
"""
Synthetic Structural Equation Models

Random rooted DAGs, non-stationary time series generated from
V_i = theta_i(U) * sum_p c_p f(parent_p) + noise_i, and an exact
d-separation oracle that can be plugged into discovery in place of the
kernel tests.
"""

import itertools
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from config import derive_seed
from dataset import Experiment, NodeSchema, write_experiment_csv
from discovery import CausalGraph, graph_to_json
from errors import DataError
from kernels import IndependenceResult

logger = logging.getLogger(__name__)

ROOT = 'U'
MECHANISM_KINDS = ('linear', 'tanh')
# coefficients are rejection-sampled outside [-MIN_COEFFICIENT, MIN_COEFFICIENT]
MIN_COEFFICIENT = 0.1


@dataclass
class Mechanism:
    """g_i: theta_i(U) * sum over parents of coefficient * f(parent)."""

    kind: str = 'linear'
    coefficients: Dict[str, float] = field(default_factory=dict)
    gain: float = 0.0

    def __post_init__(self):
        if self.kind not in MECHANISM_KINDS:
            raise DataError(f"Unknown mechanism kind '{self.kind}'")


@dataclass
class SemSpec:
    dag: CausalGraph
    mechanisms: Dict[str, Mechanism]
    noise: Dict[str, float]
    length: int = 300
    seed: int = 0
    # U(t) = slope * t / T + amplitude * sin(2 pi frequency t / T)
    u_slope: float = 1.0
    u_amplitude: float = 0.5
    u_frequency: float = 2.0


def random_dag(n: int, p: float, seed: int) -> CausalGraph:
    """
    Random DAG with node 'U' as the root.

    Non-root nodes are shuffled into a random order; every forward pair of
    that order (root first) becomes an edge with probability p.
    """
    if n < 2:
        raise DataError("random_dag needs at least 2 nodes")
    if not 0.0 <= p <= 1.0:
        raise DataError(f"Edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    others = [f"V{i}" for i in range(1, n)]
    order = [ROOT] + [others[i] for i in rng.permutation(n - 1)]
    graph = CausalGraph([ROOT] + others, ROOT)
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < p:
            graph.add_directed(order[i], order[j])
    return graph


def _coefficient(rng: np.random.Generator) -> float:
    while True:
        value = rng.uniform(-1.0, 1.0)
        if abs(value) > MIN_COEFFICIENT:
            return float(value)


def random_sem(
    dag: CausalGraph,
    seed: int,
    kind: str = 'tanh',
    noise_scale: float = 0.1,
    max_gain: float = 0.5,
    length: int = 300,
) -> SemSpec:
    """
    Random mechanisms (kind 'linear', 'tanh' or 'mixed') for a rooted DAG.

    Only children of the root get a nonzero U-modulation gain, so every
    dependence on U runs along an edge of the DAG.
    """
    rng = np.random.default_rng(seed)
    mechanisms, noise = {}, {}
    for node in dag.nodes:
        if node == dag.root:
            continue
        node_kind = kind if kind != 'mixed' else MECHANISM_KINDS[int(rng.integers(2))]
        coefficients = {p: _coefficient(rng) for p in sorted(dag.parents(node))}
        gain = float(rng.uniform(-max_gain, max_gain))
        mechanisms[node] = Mechanism(node_kind, coefficients, gain if dag.root in coefficients else 0.0)
        noise[node] = noise_scale
    return SemSpec(dag, mechanisms, noise, length, seed)


def root_path(spec: SemSpec) -> np.ndarray:
    t = np.arange(spec.length, dtype=float)
    T = float(spec.length)
    return spec.u_slope * t / T + spec.u_amplitude * np.sin(2.0 * np.pi * spec.u_frequency * t / T)


def simulate(spec: SemSpec) -> Experiment:
    """Generate one experiment; noises come from per-node sub-seeds of spec.seed."""
    dag = spec.dag
    graph = dag.to_networkx()
    if not nx.is_directed_acyclic_graph(graph):
        raise DataError("SEM graph must be acyclic")
    if dag.parents(dag.root):
        raise DataError("SEM root must have no parents")

    u = root_path(spec)
    values = {dag.root: u}
    for node in nx.lexicographical_topological_sort(graph):
        if node == dag.root:
            continue
        mechanism = spec.mechanisms.get(node, Mechanism())
        drive = np.zeros(spec.length)
        for parent, coefficient in sorted(mechanism.coefficients.items()):
            x = values[parent]
            drive += coefficient * (np.tanh(x) if mechanism.kind == 'tanh' else x)
        theta = 1.0 + mechanism.gain * u
        rng = np.random.default_rng(derive_seed(spec.seed, 'noise', node))
        noise = spec.noise.get(node, 0.0) * rng.standard_normal(spec.length)
        values[node] = theta * drive + noise
    return Experiment(f"sem-{spec.seed}", {node: values[node][:, None] for node in dag.nodes})


def simulate_lagged(spec: SemSpec, lagged_parents: Dict[str, Dict[str, float]]) -> Experiment:
    """
    Like simulate, plus one-step lagged drives: V(t) += c * f(parent(t - 1)).

    lagged_parents maps child -> {parent: coefficient}. Nodes are generated
    step by step so lagged self-loops are allowed.
    """
    dag = spec.dag
    order = [n for n in nx.lexicographical_topological_sort(dag.to_networkx()) if n != dag.root]
    u = root_path(spec)
    T = spec.length
    values = {n: np.zeros(T) for n in dag.nodes}
    values[dag.root] = u
    noises = {
        n: spec.noise.get(n, 0.0) * np.random.default_rng(derive_seed(spec.seed, 'noise', n)).standard_normal(T)
        for n in order
    }
    for t in range(T):
        for node in order:
            mechanism = spec.mechanisms.get(node, Mechanism())
            f = np.tanh if mechanism.kind == 'tanh' else (lambda v: v)
            drive = sum(c * f(values[p][t]) for p, c in sorted(mechanism.coefficients.items()))
            if t > 0:
                drive += sum(c * f(values[p][t - 1]) for p, c in sorted(lagged_parents.get(node, {}).items()))
            values[node][t] = (1.0 + mechanism.gain * u[t]) * drive + noises[node][t]
    return Experiment(f"sem-lagged-{spec.seed}", {n: values[n][:, None] for n in dag.nodes})


def d_separated(dag: CausalGraph, i: str, j: str, conditioning: Sequence[str]) -> bool:
    """Exact d-separation through the moralized ancestral graph."""
    conditioning = set(conditioning)
    for node in {i, j} | conditioning:
        if node not in dag.nodes:
            raise DataError(f"Unknown node '{node}'")
    if i == j:
        return False
    graph = dag.to_networkx()
    relevant = {i, j} | conditioning
    for node in list(relevant):
        relevant |= nx.ancestors(graph, node)
    moral = nx.moral_graph(graph.subgraph(relevant))
    moral.remove_nodes_from(conditioning - {i, j})
    return not nx.has_path(moral, i, j)


class DSeparationOracle:
    """CI tester answering from the true graph (p = 1 if d-separated, else 0)."""

    def __init__(self, dag: CausalGraph, alpha: float = 0.05):
        self.dag = dag
        self.alpha = alpha
        self.queries = 0

    def __call__(self, a: str, b: str, cond: Tuple[str, ...]) -> IndependenceResult:
        self.queries += 1
        separated = d_separated(self.dag, a, b, cond)
        return IndependenceResult(0.0, 1.0 if separated else 0.0, separated, self.alpha, 'oracle')


class TrueDirectionScorer:
    """Direction scorer from the true graph: number of proposed causes that are true children."""

    def __init__(self, dag: CausalGraph):
        self.dag = dag

    def __call__(self, causes: Sequence[str], effect: str) -> float:
        children = self.dag.children(effect)
        return float(sum(1 for c in causes if c in children))


def sem_schema(dag: CausalGraph) -> List[NodeSchema]:
    """Scalar schema for a SEM graph; sinks are leaves."""
    schema = []
    for node in dag.nodes:
        if node == dag.root:
            role = 'root'
        elif not dag.children(node):
            role = 'leaf'
        else:
            role = 'intermediate'
        schema.append(NodeSchema(node, (node,), 'scalar', role))
    return schema


def spec_to_json(spec: SemSpec) -> dict:
    return {
        'dag': graph_to_json(spec.dag),
        'mechanisms': {
            node: {'kind': m.kind, 'coefficients': dict(sorted(m.coefficients.items())), 'gain': m.gain}
            for node, m in sorted(spec.mechanisms.items())
        },
        'noise': dict(sorted(spec.noise.items())),
        'length': spec.length,
        'root_path': {'slope': spec.u_slope, 'amplitude': spec.u_amplitude, 'frequency': spec.u_frequency},
    }


def write_experiment_set(
    specs: Sequence[SemSpec],
    out_dir: str,
    calibration_fraction: float = 0.5,
) -> str:
    """
    Simulate every spec and write CSVs, a manifest and a truth file.

    All specs must share one graph. The first ceil(fraction * n) experiments
    form the calibration split.

    Returns:
        str: Path of the written manifest
    """
    if not specs:
        raise DataError("write_experiment_set needs at least one spec")
    dag = specs[0].dag
    schema = sem_schema(dag)
    os.makedirs(out_dir, exist_ok=True)

    entries = []
    for index, spec in enumerate(specs):
        if sorted(spec.dag.directed) != sorted(dag.directed):
            raise DataError("All specs written to one manifest must share the graph")
        experiment = simulate(spec)
        experiment_id = f"exp{index:03d}"
        path = f"{experiment_id}.csv"
        write_experiment_csv(experiment, schema, os.path.join(out_dir, path))
        entries.append({'id': experiment_id, 'path': path})

    n_cal = max(1, int(np.ceil(calibration_fraction * len(entries))))
    if len(entries) > 1:
        n_cal = min(n_cal, len(entries) - 1)
    manifest = {
        'nodes': [{'name': n.name, 'columns': list(n.columns), 'kind': n.kind, 'role': n.role} for n in schema],
        'experiments': entries,
        'split': {
            'calibration': [e['id'] for e in entries[:n_cal]],
            'test': [e['id'] for e in entries[n_cal:]],
        },
        'truth': 'truth.json',
    }
    with open(os.path.join(out_dir, 'truth.json'), 'w', encoding='utf-8') as f:
        json.dump(spec_to_json(specs[0]), f, indent=2, sort_keys=True)
    manifest_path = os.path.join(out_dir, 'manifest.json')
    with open(manifest_path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2)
    logger.info(f"Wrote {len(entries)} simulated experiments to {out_dir}")
    return manifest_path
