#!/usr/bin/env python3
"""
Micromechanical Features

Contact-network dumps of a granular specimen turned into per-step features:
fabric and strong-fabric tensors, the normalized fabric anisotropy
variable, principal stress differences and topological metrics of the
contact graph.
"""

import glob
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg

from errors import DataError

logger = logging.getLogger(__name__)

DUMP_COLUMNS = ('particle_a', 'particle_b', 'n1', 'n2', 'n3', 'normal_force')
# order of the six independent components of a symmetric 3x3 tensor
COMPONENT_ORDER = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2))
COMPONENT_SUFFIXES = ('11', '22', '33', '12', '23', '13')
METRIC_NAMES = (
    'density', 'transitivity', 'average_clustering', 'degree_assortativity',
    'clique_number', 'average_local_efficiency', 'coordination_number',
)
NORMAL_TOLERANCE = 1e-8
SYMMETRY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Contact:
    a: int
    b: int
    normal: Tuple[float, float, float]
    force: float


@dataclass
class ContactGraph:
    n_particles: int
    contacts: List[Contact]

    def __post_init__(self):
        for contact in self.contacts:
            if contact.a == contact.b:
                raise DataError(f"Particle {contact.a} is in contact with itself")
            if contact.force < 0:
                raise DataError(f"Negative normal force {contact.force} between {contact.a} and {contact.b}")
            if abs(np.linalg.norm(contact.normal) - 1.0) > NORMAL_TOLERANCE:
                raise DataError(f"Contact normal between {contact.a} and {contact.b} is not unit length")
        touching = len({c.a for c in self.contacts} | {c.b for c in self.contacts})
        if self.n_particles < touching:
            raise DataError(f"{touching} particles are in contact but n_particles is {self.n_particles}")

    def to_networkx(self) -> nx.Graph:
        """Simple undirected topology; duplicate contacts collapse to one edge."""
        graph = nx.Graph()
        particles = {c.a for c in self.contacts} | {c.b for c in self.contacts}
        graph.add_nodes_from(sorted(particles))
        graph.add_edges_from((c.a, c.b) for c in self.contacts)
        # particles without contacts (rattlers) are isolated nodes
        rattler = -1
        while graph.number_of_nodes() < self.n_particles:
            if rattler not in graph:
                graph.add_node(rattler)
            rattler -= 1
        return graph


@dataclass
class GraphMetricsRecord:
    density: float
    transitivity: float
    average_clustering: float
    degree_assortativity: float
    clique_number: int
    average_local_efficiency: float
    coordination_number: float
    diagnostics: List[str] = field(default_factory=list)

    def as_row(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def tensor_to_components(tensor: np.ndarray) -> np.ndarray:
    """Six components in the order 11, 22, 33, 12, 23, 13."""
    tensor = np.asarray(tensor, dtype=float)
    return np.array([tensor[i, j] for i, j in COMPONENT_ORDER])


def components_to_tensor(components: Sequence[float]) -> np.ndarray:
    components = np.asarray(components, dtype=float)
    if components.shape != (6,):
        raise DataError(f"A symmetric tensor needs 6 components, got {components.shape}")
    tensor = np.zeros((3, 3))
    for value, (i, j) in zip(components, COMPONENT_ORDER):
        tensor[i, j] = tensor[j, i] = value
    return tensor


def _symmetric(tensor) -> np.ndarray:
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape != (3, 3):
        raise DataError(f"Expected a 3x3 tensor, got shape {tensor.shape}")
    scale = max(1.0, float(np.abs(tensor).max()))
    if np.abs(tensor - tensor.T).max() > SYMMETRY_TOLERANCE * scale:
        raise DataError("Tensor is not symmetric")
    return 0.5 * (tensor + tensor.T)


def deviatoric(sigma) -> np.ndarray:
    sigma = _symmetric(sigma)
    return sigma - np.trace(sigma) / 3.0 * np.eye(3)


def frobenius(tensor) -> float:
    return float(np.linalg.norm(np.asarray(tensor, dtype=float), 'fro'))


def _fabric(contacts: Sequence[Contact]) -> np.ndarray:
    normals = np.array([c.normal for c in contacts], dtype=float)
    return normals.T @ normals / len(contacts)


def fabric_tensor(graph: ContactGraph) -> np.ndarray:
    """F = (1/n_c) sum over contacts of n (x) n."""
    if not graph.contacts:
        raise DataError("fabric_tensor needs at least one contact")
    return _fabric(graph.contacts)


def strong_fabric(graph: ContactGraph, diagnostics: Optional[List[str]] = None) -> np.ndarray:
    """Fabric of the contacts carrying more than the mean normal force."""
    if not graph.contacts:
        raise DataError("strong_fabric needs at least one contact")
    mean_force = np.mean([c.force for c in graph.contacts])
    strong = [c for c in graph.contacts if c.force > mean_force]
    if not strong:
        message = "No contact above the mean normal force; strong fabric falls back to the full fabric"
        logger.warning(message)
        if diagnostics is not None:
            diagnostics.append(message)
        return _fabric(graph.contacts)
    return _fabric(strong)


def anisotropy_A(F, sigma, diagnostics: Optional[List[str]] = None) -> float:
    """
    Normalized fabric anisotropy A = (F : n) / |F| with n = dev(sigma) / |dev(sigma)|.

    Returns 0 (with a diagnostic) when F or the deviatoric stress vanishes.
    """
    F = _symmetric(F)
    dev = deviatoric(sigma)
    norm_f, norm_dev = frobenius(F), frobenius(dev)
    if norm_f == 0.0 or norm_dev == 0.0:
        message = "Zero fabric or zero deviatoric stress: anisotropy set to 0"
        logger.debug(message)
        if diagnostics is not None:
            diagnostics.append(message)
        return 0.0
    return float(np.sum(F * (dev / norm_dev)) / norm_f)


def principal_stress_diffs(sigma) -> Tuple[float, float, float]:
    """(sigma1 - sigma2, sigma1 - sigma3, sigma2 - sigma3) with sigma1 >= sigma2 >= sigma3."""
    s1, s2, s3 = np.sort(linalg.eigvalsh(_symmetric(sigma)))[::-1]
    q1 = max(s1 - s2, 0.0)
    q3 = max(s2 - s3, 0.0)
    return float(q1), float(q1 + q3), float(q3)


def _assortativity(graph: nx.Graph, diagnostics: List[str]) -> float:
    if graph.number_of_edges() == 0:
        diagnostics.append("Edgeless graph: degree assortativity set to 0")
        return 0.0
    with warnings.catch_warnings(), np.errstate(all='ignore'):
        warnings.simplefilter('ignore')
        try:
            value = float(nx.degree_pearson_correlation_coefficient(graph))
        except (ValueError, ZeroDivisionError):
            value = float('nan')
    if not np.isfinite(value):
        diagnostics.append("Degree variance over edges is zero: degree assortativity set to 0")
        return 0.0
    return value


def graph_metrics(graph: ContactGraph) -> GraphMetricsRecord:
    """Topological metrics of the contact graph (forces are ignored)."""
    topology = graph.to_networkx()
    n = topology.number_of_nodes()
    if n < 2:
        raise DataError(f"graph_metrics needs at least 2 particles, got {n}")
    diagnostics: List[str] = []
    m = topology.number_of_edges()
    return GraphMetricsRecord(
        density=float(nx.density(topology)),
        transitivity=float(nx.transitivity(topology)),
        average_clustering=float(nx.average_clustering(topology)),
        degree_assortativity=_assortativity(topology, diagnostics),
        clique_number=max(len(c) for c in nx.find_cliques(topology)),
        average_local_efficiency=float(nx.local_efficiency(topology)),
        coordination_number=2.0 * m / n,
        diagnostics=diagnostics,
    )


def read_contact_dump(path: str, n_particles: Optional[int] = None) -> ContactGraph:
    """
    Parse one contact-network CSV (particle_a, particle_b, n1, n2, n3, normal_force).

    Normals are rescaled to unit length; a zero normal is an error. When
    n_particles is omitted the number of distinct particle ids is used.
    """
    if not os.path.exists(path):
        raise DataError(f"Contact dump not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: ragged rows ({e})")
    frame = frame.fillna('')
    missing = [c for c in DUMP_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")

    contacts = []
    for index, row in enumerate(frame[list(DUMP_COLUMNS)].itertuples(index=False)):
        line = index + 2
        try:
            a, b = int(row[0]), int(row[1])
            normal = np.array([float(v) for v in row[2:5]])
            force = float(row[5])
        except ValueError:
            raise DataError(f"{path}:{line}: malformed contact row {tuple(row)}")
        length = np.linalg.norm(normal)
        if not np.isfinite(length) or length == 0.0 or not np.isfinite(force):
            raise DataError(f"{path}:{line}: zero or non-finite contact normal/force")
        if a == b:
            raise DataError(f"{path}:{line}: particle {a} in contact with itself")
        if force < 0:
            raise DataError(f"{path}:{line}: negative normal force {force}")
        contacts.append(Contact(a, b, tuple(normal / length), force))

    particles = {c.a for c in contacts} | {c.b for c in contacts}
    return ContactGraph(n_particles if n_particles is not None else len(particles), contacts)


def read_contact_dumps(directory: str, n_particles: Optional[int] = None) -> List[Tuple[str, ContactGraph]]:
    """All *.csv dumps of a directory in file-name order."""
    if not os.path.isdir(directory):
        raise DataError(f"Contact dump directory not found: {directory}")
    paths = sorted(glob.glob(os.path.join(directory, '*.csv')))
    if not paths:
        raise DataError(f"No contact dumps (*.csv) in {directory}")
    logger.info(f"Reading {len(paths)} contact dumps from {directory}")
    return [(os.path.basename(p), read_contact_dump(p, n_particles)) for p in paths]


def feature_columns(with_stress: bool = False, strain_dim: int = 0) -> List[str]:
    columns = ['step'] + list(METRIC_NAMES)
    columns += [f"F{s}" for s in COMPONENT_SUFFIXES]
    columns += [f"SF{s}" for s in COMPONENT_SUFFIXES]
    if with_stress:
        columns += [f"sigma{s}" for s in COMPONENT_SUFFIXES]
        columns += ['q1', 'q2', 'q3', 'A', 'A_strong']
    columns += [f"strain{k + 1}" for k in range(strain_dim)]
    return columns


def _step_row(step: int, graph: ContactGraph, sigma) -> Tuple[dict, List[str]]:
    record = graph_metrics(graph)
    diagnostics = list(record.diagnostics)
    F = fabric_tensor(graph)
    SF = strong_fabric(graph, diagnostics)
    row = {'step': step, **record.as_row()}
    row.update({f"F{s}": v for s, v in zip(COMPONENT_SUFFIXES, tensor_to_components(F))})
    row.update({f"SF{s}": v for s, v in zip(COMPONENT_SUFFIXES, tensor_to_components(SF))})
    if sigma is not None:
        sigma = _symmetric(sigma)
        row.update({f"sigma{s}": v for s, v in zip(COMPONENT_SUFFIXES, tensor_to_components(sigma))})
        row['q1'], row['q2'], row['q3'] = principal_stress_diffs(sigma)
        row['A'] = anisotropy_A(F, sigma, diagnostics)
        row['A_strong'] = anisotropy_A(SF, sigma, diagnostics)
    return row, [f"step {step}: {d}" for d in diagnostics]


def timestep_features(
    dumps: Sequence[ContactGraph],
    stresses: Optional[Sequence[np.ndarray]] = None,
    strains: Optional[Sequence] = None,
    jobs: int = 1,
) -> Tuple[pd.DataFrame, List[str]]:
    """
    One feature row per time step.

    Args:
        dumps: Contact graph of every step
        stresses: Optional 3x3 stress tensor per step
        strains: Optional scalar or vector strain per step
        jobs: Worker processes for the per-step extraction

    Returns:
        (feature table, diagnostics)
    """
    if not dumps:
        raise DataError("timestep_features needs at least one step")
    if stresses is not None and len(stresses) != len(dumps):
        raise DataError(f"Misaligned inputs: {len(dumps)} contact dumps but {len(stresses)} stresses")
    strain_block = None
    if strains is not None:
        if len(strains) != len(dumps):
            raise DataError(f"Misaligned inputs: {len(dumps)} contact dumps but {len(strains)} strains")
        strain_block = np.asarray(strains, dtype=float).reshape(len(dumps), -1)

    tasks = [(step, graph, None if stresses is None else stresses[step]) for step, graph in enumerate(dumps)]
    if jobs > 1:
        results = Parallel(n_jobs=jobs)(delayed(_step_row)(*task) for task in tasks)
    else:
        results = [_step_row(*task) for task in tasks]

    rows = [row for row, _ in results]
    diagnostics = [d for _, step_diagnostics in results for d in step_diagnostics]
    if strain_block is not None:
        for row, strain in zip(rows, strain_block):
            row.update({f"strain{k + 1}": float(v) for k, v in enumerate(strain)})

    columns = feature_columns(stresses is not None, 0 if strain_block is None else strain_block.shape[1])
    return pd.DataFrame(rows, columns=columns), diagnostics


def read_stress_table(path: str, steps: int) -> List[np.ndarray]:
    """Per-step stress tensors from a CSV with columns sigma11 ... sigma13."""
    if not os.path.exists(path):
        raise DataError(f"Stress table not found: {path}")
    frame = pd.read_csv(path)
    columns = [f"sigma{s}" for s in COMPONENT_SUFFIXES]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    if len(frame) != steps:
        raise DataError(f"Misaligned inputs: {steps} contact dumps but {len(frame)} stress rows in {path}")
    try:
        values = frame[columns].to_numpy(dtype=float)
    except ValueError as e:
        raise DataError(f"{path}: non-numeric stress value ({e})")
    return [components_to_tensor(v) for v in values]
