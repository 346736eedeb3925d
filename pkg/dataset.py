#!/usr/bin/env python3
"""
Experiment Dataset

Loads experiment manifests and per-experiment CSV time histories, groups
columns into scalar, vector and symmetric-tensor nodes, and normalizes
features to zero mean and unit standard deviation.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import DataError

logger = logging.getLogger(__name__)

NODE_KINDS = ('scalar', 'vector', 'symmetric-tensor')
NODE_ROLES = ('root', 'intermediate', 'leaf', 'unconstrained')


@dataclass(frozen=True)
class NodeSchema:
    """One (possibly tensor-valued) variable and the CSV columns that form it."""

    name: str
    columns: Tuple[str, ...]
    kind: str = 'scalar'
    role: str = 'unconstrained'

    def __post_init__(self):
        if not self.columns:
            raise DataError(f"Node '{self.name}' has no columns")
        if self.kind not in NODE_KINDS:
            raise DataError(f"Node '{self.name}' has unknown kind '{self.kind}'")
        if self.role not in NODE_ROLES:
            raise DataError(f"Node '{self.name}' has unknown role '{self.role}'")
        if self.kind == 'scalar' and len(self.columns) != 1:
            raise DataError(f"Scalar node '{self.name}' must have exactly 1 column, got {len(self.columns)}")
        if len(set(self.columns)) != len(self.columns):
            raise DataError(f"Node '{self.name}' lists a column twice")

    @property
    def dim(self) -> int:
        return len(self.columns)


@dataclass
class Experiment:
    """Aligned multivariate time histories of one simulation."""

    id: str
    series: Dict[str, np.ndarray]

    def __post_init__(self):
        if not self.series:
            raise DataError(f"Experiment '{self.id}' has no series")
        lengths = set()
        for name, values in self.series.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if values.ndim != 2:
                raise DataError(f"Experiment '{self.id}': series '{name}' must be 2-D (T x dim)")
            if not np.all(np.isfinite(values)):
                raise DataError(f"Experiment '{self.id}': series '{name}' has missing or non-finite values")
            self.series[name] = values
            lengths.add(values.shape[0])
        if len(lengths) != 1:
            raise DataError(f"Experiment '{self.id}': series have differing lengths {sorted(lengths)}")
        if self.length < 2:
            raise DataError(f"Experiment '{self.id}': series too short (T={self.length}, need T >= 2)")

    @property
    def length(self) -> int:
        return next(iter(self.series.values())).shape[0]

    @property
    def nodes(self) -> List[str]:
        return list(self.series)

    def block(self, names: Sequence[str]) -> np.ndarray:
        """Concatenate the series of several nodes column-wise (T x sum of dims)."""
        missing = [n for n in names if n not in self.series]
        if missing:
            raise DataError(f"Experiment '{self.id}' has no node(s): {', '.join(missing)}")
        return np.concatenate([self.series[n] for n in names], axis=1)

    def subset(self, names: Iterable[str]) -> 'Experiment':
        names = list(names)
        self.block(names)
        return Experiment(self.id, {n: self.series[n].copy() for n in names})


@dataclass
class ExperimentSet:
    """All experiments of a manifest plus the calibration/test split."""

    experiments: List[Experiment]
    schema: List[NodeSchema]
    calibration: List[str]
    test: List[str]
    truth_path: Optional[str] = None

    def __post_init__(self):
        ids = [e.id for e in self.experiments]
        cal, tst = set(self.calibration), set(self.test)
        if cal & tst:
            raise DataError(f"Calibration and test splits overlap: {sorted(cal & tst)}")
        if cal | tst != set(ids):
            raise DataError("Calibration and test splits must jointly cover all experiments exactly")

    def get(self, experiment_id: str) -> Experiment:
        for experiment in self.experiments:
            if experiment.id == experiment_id:
                return experiment
        raise DataError(f"Unknown experiment id '{experiment_id}'")

    def node(self, name: str) -> NodeSchema:
        for node in self.schema:
            if node.name == name:
                return node
        raise DataError(f"Unknown node '{name}'")

    @property
    def node_names(self) -> List[str]:
        return [n.name for n in self.schema]

    @property
    def root(self) -> str:
        return root_name(self.schema)


@dataclass
class Normalizer:
    """Per-column mean and (population) standard deviation, grouped by node."""

    mean: Dict[str, np.ndarray]
    std: Dict[str, np.ndarray]
    warnings: List[str] = field(default_factory=list)

    def _check(self, name: str, values: np.ndarray) -> None:
        if name not in self.mean:
            raise DataError(f"Normalizer has no statistics for node '{name}'")
        if values.shape[1] != self.mean[name].shape[0]:
            raise DataError(
                f"Column-count mismatch for node '{name}': "
                f"normalizer has {self.mean[name].shape[0]}, data has {values.shape[1]}"
            )

    def normalize(self, name: str, values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=float))
        self._check(name, values)
        return (values - self.mean[name]) / self.std[name]

    def denormalize(self, name: str, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        self._check(name, values.reshape(-1, values.shape[-1]))
        return values * self.std[name] + self.mean[name]

    def to_dict(self) -> Dict[str, Dict[str, List[float]]]:
        return {
            name: {'mean': self.mean[name].tolist(), 'std': self.std[name].tolist()}
            for name in sorted(self.mean)
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Dict[str, List[float]]]) -> 'Normalizer':
        return cls(
            mean={k: np.asarray(v['mean'], dtype=float) for k, v in data.items()},
            std={k: np.asarray(v['std'], dtype=float) for k, v in data.items()},
        )


def root_name(schema: Sequence[NodeSchema]) -> str:
    roots = [n.name for n in schema if n.role == 'root']
    if len(roots) != 1:
        raise DataError(f"Exactly one node must have role=root, found {len(roots)}")
    return roots[0]


def validate_schema(schema: Sequence[NodeSchema]) -> None:
    """Check node-name uniqueness, the single root and at least one leaf."""
    names = [n.name for n in schema]
    if len(set(names)) != len(names):
        raise DataError("Duplicate node names in schema")
    root_name(schema)
    if not any(n.role == 'leaf' for n in schema):
        raise DataError("Schema needs at least one node with role=leaf")
    columns = [c for n in schema for c in n.columns]
    if len(set(columns)) != len(columns):
        raise DataError("A CSV column is assigned to more than one node")


def parse_schema(nodes: Sequence[dict]) -> List[NodeSchema]:
    schema = []
    for i, entry in enumerate(nodes):
        try:
            schema.append(NodeSchema(
                name=str(entry['name']),
                columns=tuple(str(c) for c in entry['columns']),
                kind=entry.get('kind', 'scalar'),
                role=entry.get('role', 'unconstrained'),
            ))
        except KeyError as e:
            raise DataError(f"Manifest node #{i} is missing field {e}")
    validate_schema(schema)
    return schema


def read_experiment_csv(path: str, schema: Sequence[NodeSchema], experiment_id: str) -> Experiment:
    """
    Parse one experiment CSV and group its columns into node series.

    Args:
        path: CSV file with a header row of column identifiers
        schema: Node schema naming the columns of every node
        experiment_id: Identifier for error messages and the result

    Returns:
        Experiment: Raw (physical-unit) series per node
    """
    if not os.path.exists(path):
        raise DataError(f"Experiment file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: ragged rows ({e})")
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: not UTF-8 ({e})")
    # short rows come back as NaN even with keep_default_na=False
    frame = frame.fillna('')

    series = {}
    for node in schema:
        missing = [c for c in node.columns if c not in frame.columns]
        if missing:
            raise DataError(f"{path}: column(s) {', '.join(missing)} of node '{node.name}' absent from CSV")
        columns = []
        for column in node.columns:
            raw = frame[column].str.strip()
            empty = raw == ''
            if empty.any():
                line = int(np.flatnonzero(empty.to_numpy())[0]) + 2
                raise DataError(f"{path}:{line}: ragged row or missing value in column '{column}'")
            numeric = pd.to_numeric(raw, errors='coerce')
            bad = numeric.isna()
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise DataError(f"{path}:{row + 2}: non-numeric cell '{raw.iloc[row]}' in column '{column}'")
            columns.append(numeric.to_numpy(dtype=float))
        series[node.name] = np.column_stack(columns)

    if len(frame) < 2:
        raise DataError(f"{path}: series too short (T={len(frame)}, need T >= 2)")
    return Experiment(experiment_id, series)


def load_manifest(path: str) -> ExperimentSet:
    """
    Load a JSON manifest and every experiment CSV it references.

    Args:
        path: Manifest file {nodes, experiments, split}

    Returns:
        ExperimentSet: Loaded experiments with the calibration/test split
    """
    if not os.path.exists(path):
        raise DataError(f"Manifest not found: {path}")
    logger.info(f"Loading manifest {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Manifest {path} is not valid JSON: {e}")

    for key in ('nodes', 'experiments'):
        if key not in manifest:
            raise DataError(f"Manifest {path} is missing '{key}'")
    schema = parse_schema(manifest['nodes'])

    entries = manifest['experiments']
    if not entries:
        raise DataError("empty experiment list")
    ids = [str(e['id']) for e in entries]
    duplicates = sorted({i for i in ids if ids.count(i) > 1})
    if duplicates:
        raise DataError(f"Duplicate experiment id(s): {', '.join(duplicates)}")

    base_dir = os.path.dirname(os.path.abspath(path))
    experiments = []
    for entry in entries:
        csv_path = entry['path']
        if not os.path.isabs(csv_path):
            csv_path = os.path.join(base_dir, csv_path)
        experiments.append(read_experiment_csv(csv_path, schema, str(entry['id'])))

    split = manifest.get('split', {})
    calibration = [str(i) for i in split.get('calibration', ids)]
    test = [str(i) for i in split.get('test', [i for i in ids if i not in calibration])]

    truth_path = manifest.get('truth')
    if truth_path and not os.path.isabs(truth_path):
        truth_path = os.path.join(base_dir, truth_path)

    logger.info(f"Loaded {len(experiments)} experiments over {len(schema)} nodes "
                f"({len(calibration)} calibration, {len(test)} test)")
    return ExperimentSet(experiments, schema, calibration, test, truth_path)


def fit_normalizer(data: ExperimentSet, ids: Sequence[str]) -> Normalizer:
    """
    Pooled per-column statistics over all rows of the given experiments.

    Uses the population (divide-by-N) variance. Constant columns get std 1
    and a recorded warning so they pass through unscaled.
    """
    if not ids:
        raise DataError("Cannot fit a normalizer on an empty id list")
    experiments = [data.get(i) for i in ids]
    mean, std, warnings = {}, {}, []
    for name in experiments[0].nodes:
        stacked = np.concatenate([e.series[name] for e in experiments], axis=0)
        mu = stacked.mean(axis=0)
        sd = stacked.std(axis=0)
        for column in np.flatnonzero(sd == 0):
            message = f"Constant column {column} of node '{name}': std replaced by 1"
            logger.warning(message)
            warnings.append(message)
        sd = np.where(sd == 0, 1.0, sd)
        mean[name], std[name] = mu, sd
    return Normalizer(mean, std, warnings)


def apply_normalizer(normalizer: Normalizer, experiment: Experiment) -> Experiment:
    return Experiment(experiment.id, {
        name: normalizer.normalize(name, values) for name, values in experiment.series.items()
    })


def invert_normalizer(normalizer: Normalizer, experiment: Experiment) -> Experiment:
    return Experiment(experiment.id, {
        name: normalizer.denormalize(name, values) for name, values in experiment.series.items()
    })


def write_experiment_csv(experiment: Experiment, schema: Sequence[NodeSchema], path: str) -> None:
    """Write an experiment back to the CSV layout read_experiment_csv expects."""
    columns = {}
    for node in schema:
        values = experiment.series[node.name]
        for k, column in enumerate(node.columns):
            columns[column] = values[:, k]
    frame = pd.DataFrame(columns)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format='%.17g')
