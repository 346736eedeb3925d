#!/usr/bin/env python3
"""
Uncertainty Quantification

Monte-Carlo dropout ensembles for single tasks and for a whole task plan,
quantile bands, and the evaluation statistics used to compare predictions
with held-out experiments (scaled MSE, empirical CDF, box-plot summaries).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import derive_seed
from dataset import Experiment
from errors import DataError
from graphops import TaskPlan
from surrogate import DropoutMasks, TrainedModel, forward_sequence, model_masks

logger = logging.getLogger(__name__)


@dataclass
class PredictionEnsemble:
    node: str
    samples: np.ndarray  # B x T x dim

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 3:
            raise DataError(f"Ensemble for '{self.node}' must be B x T x dim, got shape {self.samples.shape}")
        if self.samples.shape[0] < 1:
            raise DataError(f"Ensemble for '{self.node}' is empty")

    @property
    def size(self) -> int:
        return self.samples.shape[0]


@dataclass
class IntervalBand:
    node: str
    level: float
    lower: np.ndarray
    mean: np.ndarray
    upper: np.ndarray


@dataclass
class EcdfCurve:
    errors: np.ndarray
    F: np.ndarray
    # number of error values the curve was built from
    count: int = 0


def _pass_masks(model: TrainedModel, rate: float, seed: int, passes: int) -> List[DropoutMasks]:
    """Per-layer masks stacked over passes; pass b always draws from the same sub-seed."""
    per_pass = [
        model_masks(model, rate, np.random.default_rng(derive_seed(seed, model.task.key, b)))
        for b in range(passes)
    ]
    return [
        DropoutMasks(
            np.stack([masks[layer].m_x for masks in per_pass]),
            np.stack([masks[layer].m_h for masks in per_pass]),
            rate,
        )
        for layer in range(len(model.layers))
    ]


def _rate(model: TrainedModel, rate: Optional[float]) -> float:
    rate = model.config.dropout_rate if rate is None else rate
    if not 0.0 <= rate < 1.0:
        raise DataError(f"Dropout rate must lie in [0, 1), got {rate}")
    return rate


def mc_predict(
    model: TrainedModel,
    inputs: Mapping[str, np.ndarray],
    ensemble_size: int,
    rate: Optional[float] = None,
    seed: int = 0,
) -> Dict[str, PredictionEnsemble]:
    """
    B stochastic forward passes, each with its own masks held fixed over time.

    Args:
        model: Trained surrogate
        inputs: Physical-unit series of every input node (or an Experiment)
        ensemble_size: Number of passes B
        rate: Dropout rate; None reuses the training rate
        seed: Master seed for the per-pass masks

    Returns:
        Dict[str, PredictionEnsemble]: One ensemble per output node
    """
    if ensemble_size < 1:
        raise DataError("ensemble_size must be >= 1")
    if isinstance(inputs, Experiment):
        inputs = inputs.series
    rate = _rate(model, rate)
    x = model.encode_inputs(inputs)
    batch = np.broadcast_to(x, (ensemble_size,) + x.shape)
    y = forward_sequence(batch, model, _pass_masks(model, rate, seed, ensemble_size))
    return {name: PredictionEnsemble(name, values) for name, values in model.decode_outputs(y).items()}


def propagate(
    plan: TaskPlan,
    models: Mapping[str, TrainedModel],
    roots: Mapping[str, np.ndarray],
    ensemble_size: int,
    rate: Optional[float] = None,
    seed: int = 0,
) -> Dict[str, PredictionEnsemble]:
    """
    Chain Monte-Carlo predictions through the task schedule.

    Pass b of every task consumes the b-th sampled trajectories of its
    inputs, so downstream ensembles integrate over upstream uncertainty.
    Root nodes use the given series for every pass.

    Returns:
        Dict[str, PredictionEnsemble]: Ensembles for roots and every predicted node
    """
    if ensemble_size < 1:
        raise DataError("ensemble_size must be >= 1")
    if isinstance(roots, Experiment):
        roots = roots.series
    samples: Dict[str, np.ndarray] = {}
    for root in plan.roots:
        if root not in roots:
            raise DataError(f"Missing series for root node '{root}'")
        values = np.asarray(roots[root], dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        samples[root] = np.broadcast_to(values, (ensemble_size,) + values.shape)

    for task in sorted(plan.tasks, key=lambda t: t.order_index):
        model = models.get(task.key)
        if model is None:
            raise DataError(f"No trained model for task {task.key}")
        missing = [n for n in task.inputs if n not in samples]
        if missing:
            raise DataError(f"Task {task.key} scheduled before its inputs {missing} are available")
        task_rate = _rate(model, rate)
        x = model.encode_inputs({n: samples[n] for n in task.inputs})
        y = forward_sequence(x, model, _pass_masks(model, task_rate, seed, ensemble_size))
        samples.update(model.decode_outputs(y))
        logger.debug(f"Propagated task {task.key} ({ensemble_size} passes, dropout {task_rate})")

    return {name: PredictionEnsemble(name, np.array(values)) for name, values in samples.items()}


def _rank_index(p: float, n: int) -> int:
    """Zero-based nearest-rank position of quantile p among n sorted values."""
    return min(max(math.ceil(p * n - 1e-9), 1), n) - 1


def interval(ensemble: PredictionEnsemble, level: float) -> IntervalBand:
    """
    Nearest-rank quantile band at the given level around the ensemble mean.

    Bounds are widened to the mean where a skewed ensemble would otherwise
    put the mean outside the band.
    """
    if not 0.0 < level < 1.0:
        raise DataError(f"level must lie in (0, 1), got {level}")
    ordered = np.sort(ensemble.samples, axis=0)
    n = ordered.shape[0]
    lower = ordered[_rank_index((1.0 - level) / 2.0, n)]
    upper = ordered[_rank_index((1.0 + level) / 2.0, n)]
    mean = ensemble.samples.mean(axis=0)
    widened = int(np.count_nonzero((lower > mean) | (upper < mean)))
    if widened:
        logger.debug(f"Interval for {ensemble.node} widened to contain the mean at {widened} entries")
    return IntervalBand(ensemble.node, level, np.minimum(lower, mean), mean, np.maximum(upper, mean))


def coverage(band: IntervalBand, truth: np.ndarray) -> float:
    """Fraction of truth entries inside [lower, upper]."""
    truth = np.asarray(truth, dtype=float).reshape(band.mean.shape)
    inside = (truth >= band.lower) & (truth <= band.upper)
    return float(inside.mean())


def scaled_mse(truth: np.ndarray, prediction: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Point-wise squared error after min-max scaling both series by the truth.

    Each component is scaled with the truth's own minimum and range; a
    constant truth component uses range 1. Per-step errors average over
    components.

    Returns:
        (errors per step, mean error)
    """
    truth = np.asarray(truth, dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if truth.ndim == 1:
        truth = truth[:, None]
    if prediction.ndim == 1:
        prediction = prediction[:, None]
    if truth.shape != prediction.shape:
        raise DataError(f"scaled_mse shape mismatch: {truth.shape} vs {prediction.shape}")
    low = truth.min(axis=0)
    span = truth.max(axis=0) - low
    span = np.where(span > 0, span, 1.0)
    errors = (((prediction - low) / span - (truth - low) / span) ** 2).mean(axis=1)
    return errors, float(errors.mean())


def ecdf(errors: Sequence[float]) -> EcdfCurve:
    """F(e) = (number of errors <= e) / M on the sorted unique error values."""
    values = np.sort(np.asarray(errors, dtype=float).ravel())
    if values.size == 0:
        raise DataError("ecdf needs at least one error value")
    unique = np.unique(values)
    counts = np.searchsorted(values, unique, side='right')
    return EcdfCurve(unique, counts / values.size, values.size)


def boxplot_stats(values: Sequence[float]) -> Dict[str, float]:
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise DataError("boxplot_stats needs at least one value")
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {
        'min': float(values.min()),
        'q1': float(q1),
        'median': float(median),
        'q3': float(q3),
        'max': float(values.max()),
        'count': int(values.size),
    }


def ensemble_frame(ensembles: Mapping[str, PredictionEnsemble]) -> pd.DataFrame:
    """Long table (node, sample_index, step, component, value)."""
    frames = []
    for name in sorted(ensembles):
        samples = ensembles[name].samples
        b, t, d = np.meshgrid(np.arange(samples.shape[0]), np.arange(samples.shape[1]),
                              np.arange(samples.shape[2]), indexing='ij')
        frames.append(pd.DataFrame({
            'node': name,
            'sample_index': b.ravel(),
            'step': t.ravel(),
            'component': d.ravel(),
            'value': samples.ravel(),
        }))
    return pd.concat(frames, ignore_index=True)


def interval_frame(bands: Mapping[str, IntervalBand]) -> pd.DataFrame:
    """Long table (node, step, component, lower, mean, upper)."""
    frames = []
    for name in sorted(bands):
        band = bands[name]
        t, d = np.meshgrid(np.arange(band.mean.shape[0]), np.arange(band.mean.shape[1]), indexing='ij')
        frames.append(pd.DataFrame({
            'node': name,
            'step': t.ravel(),
            'component': d.ravel(),
            'lower': band.lower.ravel(),
            'mean': band.mean.ravel(),
            'upper': band.upper.ravel(),
        }))
    return pd.concat(frames, ignore_index=True)


def ecdf_frame(curve: EcdfCurve) -> pd.DataFrame:
    return pd.DataFrame({'error': curve.errors, 'F': curve.F})
