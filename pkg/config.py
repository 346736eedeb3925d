"""
Configuration for the causal surrogate pipeline
Adjust these settings through environment variables, a .env file, or a JSON
pipeline config passed with --config
"""

import dataclasses
import json
import logging
import os
import zlib
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from dotenv import load_dotenv

from errors import UsageError

logger = logging.getLogger(__name__)

ENV_FILE = os.path.join(os.path.dirname(os.path.abspath(__file__)), '.env')
if os.path.exists(ENV_FILE):
    load_dotenv(ENV_FILE)

# ============================================================================
# Causal discovery
# ============================================================================
CAUSAL_ALPHA = float(os.getenv('CAUSAL_ALPHA', '0.05'))
# Empty string means "no cap" on conditioning-set size
_MAX_COND = os.getenv('CAUSAL_MAX_COND', '3')
CAUSAL_MAX_COND = int(_MAX_COND) if _MAX_COND.strip() else None
CAUSAL_INCLUSION_THRESHOLD = float(os.getenv('CAUSAL_INCLUSION_THRESHOLD', '0.2'))
CAUSAL_CI_METHOD = os.getenv('CAUSAL_CI_METHOD', 'gamma').lower()
CAUSAL_PERMUTATIONS = int(os.getenv('CAUSAL_PERMUTATIONS', '500'))
CAUSAL_RIDGE = float(os.getenv('CAUSAL_RIDGE', '1e-3'))

# ============================================================================
# Recurrent surrogate training
# ============================================================================
CAUSAL_HIDDEN_UNITS = int(os.getenv('CAUSAL_HIDDEN_UNITS', '32'))
CAUSAL_LAYERS = int(os.getenv('CAUSAL_LAYERS', '2'))
CAUSAL_DROPOUT = float(os.getenv('CAUSAL_DROPOUT', '0.2'))
CAUSAL_EPOCHS = int(os.getenv('CAUSAL_EPOCHS', '1000'))
CAUSAL_BATCH_SIZE = int(os.getenv('CAUSAL_BATCH_SIZE', '32'))
CAUSAL_LEARNING_RATE = float(os.getenv('CAUSAL_LEARNING_RATE', '0.001'))
CAUSAL_WINDOW = int(os.getenv('CAUSAL_WINDOW', '20'))

# ============================================================================
# Uncertainty quantification
# ============================================================================
CAUSAL_ENSEMBLE_SIZE = int(os.getenv('CAUSAL_ENSEMBLE_SIZE', '200'))
CAUSAL_LEVEL = float(os.getenv('CAUSAL_LEVEL', '0.95'))

# Pipeline
CAUSAL_SEED = int(os.getenv('CAUSAL_SEED', '0'))
CAUSAL_JOBS = int(os.getenv('CAUSAL_JOBS', '1'))
CAUSAL_OUTPUT_DIR = os.getenv('CAUSAL_OUTPUT_DIR', 'artefacts')
CAUSAL_LOG_LEVEL = os.getenv('CAUSAL_LOG_LEVEL', 'INFO').upper()

CI_METHODS = ('gamma', 'permutation')


@dataclass
class DiscoveryConfig:
    """Settings for skeleton recovery, orientation and consensus."""

    alpha: float = CAUSAL_ALPHA
    max_conditioning_size: Optional[int] = CAUSAL_MAX_COND
    inclusion_threshold: float = CAUSAL_INCLUSION_THRESHOLD
    ci_method: str = CAUSAL_CI_METHOD
    seed: int = CAUSAL_SEED
    n_permutations: int = CAUSAL_PERMUTATIONS
    ridge: float = CAUSAL_RIDGE
    lag: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise UsageError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.inclusion_threshold <= 1.0:
            raise UsageError(f"inclusion_threshold must lie in [0, 1], got {self.inclusion_threshold}")
        if self.ci_method not in CI_METHODS:
            raise UsageError(f"ci_method must be one of {CI_METHODS}, got '{self.ci_method}'")
        if self.max_conditioning_size is not None and self.max_conditioning_size < 0:
            raise UsageError("max_conditioning_size must be non-negative")
        if self.lag < 0:
            raise UsageError("lag must be non-negative")


@dataclass
class TrainConfig:
    """Architecture and optimizer settings for one recurrent surrogate."""

    hidden_units: int = CAUSAL_HIDDEN_UNITS
    layers: int = CAUSAL_LAYERS
    dropout_rate: float = CAUSAL_DROPOUT
    epochs: int = CAUSAL_EPOCHS
    batch_size: int = CAUSAL_BATCH_SIZE
    learning_rate: float = CAUSAL_LEARNING_RATE
    seed: int = CAUSAL_SEED
    window_length: int = CAUSAL_WINDOW
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    # ReduceLROnPlateau-style schedule; None disables it
    lr_plateau_factor: Optional[float] = None
    plateau_patience: int = 10
    min_learning_rate: float = 1e-6

    def __post_init__(self):
        if self.hidden_units < 1 or self.layers < 1:
            raise UsageError("hidden_units and layers must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise UsageError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.epochs < 0 or self.batch_size < 1 or self.window_length < 1:
            raise UsageError("epochs must be >= 0, batch_size and window_length >= 1")
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be positive")


@dataclass
class UQConfig:
    """Monte-Carlo dropout settings; dropout_rate None reuses each model's rate."""

    ensemble_size: int = CAUSAL_ENSEMBLE_SIZE
    dropout_rate: Optional[float] = None
    level: float = CAUSAL_LEVEL

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise UsageError("ensemble_size must be >= 1")
        if self.dropout_rate is not None and not 0.0 <= self.dropout_rate < 1.0:
            raise UsageError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not 0.0 < self.level < 1.0:
            raise UsageError(f"level must lie in (0, 1), got {self.level}")


@dataclass
class PipelineConfig:
    """Everything one CLI invocation needs."""

    manifest: Optional[str] = None
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    # keyed by task key ("out1+out2") -> TrainConfig field overrides
    task_overrides: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    uq: UQConfig = field(default_factory=UQConfig)
    output_dir: str = CAUSAL_OUTPUT_DIR
    seed: int = CAUSAL_SEED
    jobs: int = CAUSAL_JOBS
    profile: str = 'standard'

    def train_config_for(self, task_key: str) -> TrainConfig:
        """TrainConfig for one task with its overrides applied."""
        overrides = self.task_overrides.get(task_key, {})
        try:
            return dataclasses.replace(self.train, **overrides)
        except TypeError as e:
            raise UsageError(f"Bad training override for task '{task_key}': {e}")


# Named profiles: 'standard' is the two-layer dropout setup, 'deep' the three-layer plateau setup
PROFILES: Dict[str, Dict[str, Dict[str, Any]]] = {
    'standard': {
        'train': {'hidden_units': 32, 'layers': 2, 'dropout_rate': 0.2,
                  'batch_size': 32, 'learning_rate': 0.001, 'epochs': 1000},
        'uq': {'ensemble_size': 200, 'level': 0.95},
        'discovery': {'inclusion_threshold': 0.2},
    },
    'deep': {
        'train': {'hidden_units': 32, 'layers': 3, 'dropout_rate': 0.0,
                  'batch_size': 128, 'learning_rate': 0.001, 'epochs': 1000,
                  'lr_plateau_factor': 0.95},
        'uq': {'ensemble_size': 200, 'level': 0.95},
        'discovery': {'inclusion_threshold': 0.2},
    },
}

_SECTIONS = {'discovery': DiscoveryConfig, 'train': TrainConfig, 'uq': UQConfig}
_TOP_LEVEL = {'manifest', 'task_overrides', 'output_dir', 'seed', 'jobs', 'profile'}


def _build_section(cls, values: Dict[str, Any], section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"Unknown keys in config section '{section}': {', '.join(unknown)}")
    return cls(**values)


def load_pipeline_config(
    path: Optional[str] = None,
    profile: Optional[str] = None,
    seed: Optional[int] = None,
    jobs: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> PipelineConfig:
    """
    Build a PipelineConfig from profile defaults, a JSON file and CLI flags.

    Precedence (lowest to highest): environment defaults, profile, file, flags.
    The master seed is copied into the discovery and training sections.

    Args:
        path: Optional JSON config file
        profile: Profile name ("standard" or "deep")
        seed: Seed override from --seed
        jobs: Worker count override from --jobs
        output_dir: Output directory override from --out

    Returns:
        PipelineConfig: Fully validated configuration
    """
    data: Dict[str, Any] = {}
    if path:
        if not os.path.exists(path):
            raise UsageError(f"Config file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise UsageError(f"Config file {path} must contain a JSON object")

    unknown = sorted(set(data) - _TOP_LEVEL - set(_SECTIONS))
    if unknown:
        raise UsageError(f"Unknown config keys: {', '.join(unknown)}")

    profile_name = profile or data.get('profile', 'standard')
    if profile_name not in PROFILES:
        raise UsageError(f"Unknown profile '{profile_name}'. Available: {', '.join(sorted(PROFILES))}")

    master_seed = seed if seed is not None else int(data.get('seed', CAUSAL_SEED))

    sections = {}
    for name, cls in _SECTIONS.items():
        values = dict(PROFILES[profile_name].get(name, {}))
        values.update(data.get(name, {}))
        if name in ('discovery', 'train'):
            values['seed'] = master_seed
        sections[name] = _build_section(cls, values, name)

    task_overrides = data.get('task_overrides', {})
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    for key, overrides in task_overrides.items():
        bad = sorted(set(overrides) - train_fields)
        if bad:
            raise UsageError(f"Unknown training keys for task '{key}': {', '.join(bad)}")

    config = PipelineConfig(
        manifest=data.get('manifest'),
        discovery=sections['discovery'],
        train=sections['train'],
        task_overrides=task_overrides,
        uq=sections['uq'],
        output_dir=output_dir or data.get('output_dir', CAUSAL_OUTPUT_DIR),
        seed=master_seed,
        jobs=jobs if jobs is not None else int(data.get('jobs', CAUSAL_JOBS)),
        profile=profile_name,
    )
    if config.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    logger.info(f"Loaded pipeline config (profile={profile_name}, seed={master_seed}, jobs={config.jobs})")
    return config


def derive_seed(master: int, *labels: Any) -> int:
    """
    Derive a deterministic 32-bit sub-seed from the master seed and labels.

    Labels may be integers or strings; the result does not depend on the
    order in which stage items are executed.
    """
    entropy = [int(master) & 0xFFFFFFFF]
    for label in labels:
        if isinstance(label, str):
            entropy.append(zlib.crc32(label.encode('utf-8')))
        else:
            entropy.append(int(label) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
