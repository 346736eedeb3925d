#!/usr/bin/env python3
"""
Recurrent Surrogates

Stacked gated recurrent layers with an affine read-out, trained per
learning task with Monte-Carlo dropout masks held fixed across the time
steps of one pass. Forward pass, backpropagation through time and the
adaptive-moment optimizer are implemented directly on numpy arrays.
"""

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import TrainConfig, derive_seed
from dataset import Experiment, ExperimentSet, Normalizer, fit_normalizer
from errors import DataError, NumericalError
from graphops import LearningTask

logger = logging.getLogger(__name__)

GATE_NAMES = ('W_z', 'W_r', 'W_h', 'U_z', 'U_r', 'U_h', 'b_z', 'b_r', 'b_h')
FD_STEP = 1e-5


def sigmoid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass
class GruWeights:
    """One recurrent layer; W_* are hidden x input, U_* hidden x hidden."""

    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        hidden, inputs = self.W_z.shape
        for name in ('W_z', 'W_r', 'W_h'):
            if getattr(self, name).shape != (hidden, inputs):
                raise DataError(f"{name} must be {hidden}x{inputs}, got {getattr(self, name).shape}")
        for name in ('U_z', 'U_r', 'U_h'):
            if getattr(self, name).shape != (hidden, hidden):
                raise DataError(f"{name} must be {hidden}x{hidden}, got {getattr(self, name).shape}")
        for name in ('b_z', 'b_r', 'b_h'):
            if getattr(self, name).shape != (hidden,):
                raise DataError(f"{name} must have length {hidden}, got {getattr(self, name).shape}")

    @property
    def hidden(self) -> int:
        return self.W_z.shape[0]

    @property
    def inputs(self) -> int:
        return self.W_z.shape[1]

    @classmethod
    def zeros(cls, inputs: int, hidden: int) -> 'GruWeights':
        return cls(
            *[np.zeros((hidden, inputs)) for _ in range(3)],
            *[np.zeros((hidden, hidden)) for _ in range(3)],
            *[np.zeros(hidden) for _ in range(3)],
        )

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in GATE_NAMES}


@dataclass
class DropoutMasks:
    """Inverted-dropout masks for one layer; rows are batch elements."""

    m_x: np.ndarray
    m_h: np.ndarray
    rate: float = 0.0


def draw_masks(rng: np.random.Generator, inputs: int, hidden: int, rate: float, batch: Optional[int] = None) -> DropoutMasks:
    """Bernoulli keep-masks scaled by 1/(1 - rate); all ones when rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise DataError(f"Dropout rate must lie in [0, 1), got {rate}")
    shape_x = (inputs,) if batch is None else (batch, inputs)
    shape_h = (hidden,) if batch is None else (batch, hidden)
    if rate == 0.0:
        return DropoutMasks(np.ones(shape_x), np.ones(shape_h), 0.0)
    keep = 1.0 - rate
    m_x = (rng.random(shape_x) < keep) / keep
    m_h = (rng.random(shape_h) < keep) / keep
    return DropoutMasks(m_x, m_h, rate)


def _cell(x_t, h_prev, w: GruWeights, m_x, m_h):
    xm = x_t * m_x
    hm = h_prev * m_h
    z = sigmoid(xm @ w.W_z.T + hm @ w.U_z.T + w.b_z)
    r = sigmoid(xm @ w.W_r.T + hm @ w.U_r.T + w.b_r)
    i = np.tanh(xm @ w.W_h.T + (r * hm) @ w.U_h.T + w.b_h)
    h = z * h_prev + (1.0 - z) * i
    return h, (xm, hm, h_prev, z, r, i)


def gru_cell(x_t, h_prev, w: GruWeights, masks: Optional[DropoutMasks] = None) -> np.ndarray:
    """
    One recurrent step:

        z = sigmoid(W_z (x*m_x) + U_z (h*m_h) + b_z)
        r = sigmoid(W_r (x*m_x) + U_r (h*m_h) + b_r)
        i = tanh(W_h (x*m_x) + U_h (r * (h*m_h)) + b_h)
        h_t = z * h_prev + (1 - z) * i
    """
    x_t = np.asarray(x_t, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    if x_t.shape[-1] != w.inputs or h_prev.shape[-1] != w.hidden:
        raise DataError(
            f"gru_cell shape mismatch: x has {x_t.shape[-1]} (expected {w.inputs}), "
            f"h has {h_prev.shape[-1]} (expected {w.hidden})"
        )
    m_x = 1.0 if masks is None else masks.m_x
    m_h = 1.0 if masks is None else masks.m_h
    h, _ = _cell(x_t, h_prev, w, m_x, m_h)
    return h


@dataclass
class TrainedModel:
    task: LearningTask
    config: TrainConfig
    layers: List[GruWeights]
    W_Y: np.ndarray
    b_Y: np.ndarray
    input_dims: Dict[str, int]
    output_dims: Dict[str, int]
    normalizer: Optional[Normalizer] = None
    final_loss: float = float('nan')
    loss_history: List[float] = field(default_factory=list)

    @property
    def input_size(self) -> int:
        return sum(self.input_dims.values())

    @property
    def output_size(self) -> int:
        return sum(self.output_dims.values())

    def parameters(self) -> Dict[str, np.ndarray]:
        """Every trainable array keyed by a stable name (views, not copies)."""
        params = {}
        for index, layer in enumerate(self.layers):
            for name, value in layer.arrays().items():
                params[f"layer{index}.{name}"] = value
        params['W_Y'] = self.W_Y
        params['b_Y'] = self.b_Y
        return params

    def encode_inputs(self, series: Mapping[str, np.ndarray]) -> np.ndarray:
        """Normalize and concatenate input node series; leading axes are kept."""
        blocks = []
        for name, dim in self.input_dims.items():
            if name not in series:
                raise DataError(f"Task {self.task.key}: missing input node '{name}'")
            values = np.asarray(series[name], dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if values.shape[-1] != dim:
                raise DataError(f"Task {self.task.key}: node '{name}' has {values.shape[-1]} components, expected {dim}")
            if self.normalizer is not None:
                values = (values - self.normalizer.mean[name]) / self.normalizer.std[name]
            blocks.append(values)
        return np.concatenate(blocks, axis=-1)

    def decode_outputs(self, y: np.ndarray) -> Dict[str, np.ndarray]:
        """Split network outputs per output node and return them in physical units."""
        result, offset = {}, 0
        for name, dim in self.output_dims.items():
            values = y[..., offset:offset + dim]
            if self.normalizer is not None:
                values = values * self.normalizer.std[name] + self.normalizer.mean[name]
            result[name] = values
            offset += dim
        return result


def init_model(
    task: LearningTask,
    input_dims: Mapping[str, int],
    output_dims: Mapping[str, int],
    cfg: TrainConfig,
    normalizer: Optional[Normalizer] = None,
) -> TrainedModel:
    """Seeded uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases start at 0."""
    rng = np.random.default_rng(derive_seed(cfg.seed, 'init', task.key))
    hidden = cfg.hidden_units
    layers = []
    fan_in = sum(input_dims.values())
    for _ in range(cfg.layers):
        w_bound = 1.0 / np.sqrt(fan_in)
        u_bound = 1.0 / np.sqrt(hidden)
        layers.append(GruWeights(
            *[rng.uniform(-w_bound, w_bound, (hidden, fan_in)) for _ in range(3)],
            *[rng.uniform(-u_bound, u_bound, (hidden, hidden)) for _ in range(3)],
            *[np.zeros(hidden) for _ in range(3)],
        ))
        fan_in = hidden
    out_bound = 1.0 / np.sqrt(hidden)
    output_size = sum(output_dims.values())
    return TrainedModel(
        task=task,
        config=cfg,
        layers=layers,
        W_Y=rng.uniform(-out_bound, out_bound, (hidden, output_size)),
        b_Y=np.zeros(output_size),
        input_dims=dict(input_dims),
        output_dims=dict(output_dims),
        normalizer=normalizer,
    )


def model_masks(model: TrainedModel, rate: float, rng: np.random.Generator, batch: Optional[int] = None) -> List[DropoutMasks]:
    masks = []
    for layer in model.layers:
        masks.append(draw_masks(rng, layer.inputs, layer.hidden, rate, batch))
    return masks


def _as_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x[None, :, :], True
    if x.ndim != 3:
        raise DataError(f"Sequence input must be T x d or N x T x d, got shape {x.shape}")
    return x, False


def _forward(model: TrainedModel, x: np.ndarray, masks: Optional[Sequence[DropoutMasks]]):
    """x is N x T x d; returns outputs N x T x o and the BPTT cache."""
    if x.shape[-1] != model.input_size:
        raise DataError(f"Task {model.task.key}: input has {x.shape[-1]} features, model expects {model.input_size}")
    if masks is not None and len(masks) != len(model.layers):
        raise DataError(f"Expected {len(model.layers)} dropout masks, got {len(masks)}")
    n, steps, _ = x.shape
    caches = []
    sequence = x
    for index, layer in enumerate(model.layers):
        m_x = 1.0 if masks is None else masks[index].m_x
        m_h = 1.0 if masks is None else masks[index].m_h
        h = np.zeros((n, layer.hidden))
        hidden_states = np.empty((n, steps, layer.hidden))
        step_cache = []
        for t in range(steps):
            h, cache = _cell(sequence[:, t, :], h, layer, m_x, m_h)
            hidden_states[:, t, :] = h
            step_cache.append(cache)
        caches.append((step_cache, m_x, m_h))
        sequence = hidden_states
    y = sequence @ model.W_Y + model.b_Y
    return y, (caches, sequence)


def _backward(model: TrainedModel, dy: np.ndarray, cache) -> Dict[str, np.ndarray]:
    caches, top = cache
    grads = {
        'W_Y': np.einsum('nth,nto->ho', top, dy),
        'b_Y': dy.sum(axis=(0, 1)),
    }
    d_sequence = dy @ model.W_Y.T
    for index in reversed(range(len(model.layers))):
        layer = model.layers[index]
        step_cache, m_x, m_h = caches[index]
        g = {name: np.zeros_like(value) for name, value in layer.arrays().items()}
        n, steps, _ = d_sequence.shape
        dx = np.zeros((n, steps, layer.inputs))
        dh_next = np.zeros((n, layer.hidden))
        for t in reversed(range(steps)):
            xm, hm, h_prev, z, r, i = step_cache[t]
            dh = d_sequence[:, t, :] + dh_next
            da_z = dh * (h_prev - i) * z * (1.0 - z)
            da_i = dh * (1.0 - z) * (1.0 - i * i)
            dh_prev = dh * z

            rhm = r * hm
            g['W_h'] += da_i.T @ xm
            g['U_h'] += da_i.T @ rhm
            g['b_h'] += da_i.sum(axis=0)
            d_rhm = da_i @ layer.U_h
            da_r = d_rhm * hm * r * (1.0 - r)
            dhm = d_rhm * r

            g['W_r'] += da_r.T @ xm
            g['U_r'] += da_r.T @ hm
            g['b_r'] += da_r.sum(axis=0)
            g['W_z'] += da_z.T @ xm
            g['U_z'] += da_z.T @ hm
            g['b_z'] += da_z.sum(axis=0)

            dhm = dhm + da_z @ layer.U_z + da_r @ layer.U_r
            dh_next = dh_prev + dhm * m_h
            dxm = da_z @ layer.W_z + da_r @ layer.W_r + da_i @ layer.W_h
            dx[:, t, :] = dxm * m_x
        for name, value in g.items():
            grads[f"layer{index}.{name}"] = value
        d_sequence = dx
    return grads


def forward_sequence(x, model: TrainedModel, masks: Optional[Sequence[DropoutMasks]] = None) -> np.ndarray:
    """
    Roll the stacked recurrence over a normalized input series.

    Args:
        x: T x d (or N x T x d) normalized inputs
        model: Trained or initialized model
        masks: Per-layer masks reused at every step; None means no dropout

    Returns:
        np.ndarray: T x o (or N x T x o) normalized outputs
    """
    batch, single = _as_batch(x)
    y, _ = _forward(model, batch, masks)
    return y[0] if single else y


def loss_and_gradients(model: TrainedModel, x, y, masks: Optional[Sequence[DropoutMasks]] = None) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean squared error over all steps and components, with its gradients."""
    x, _ = _as_batch(x)
    y, _ = _as_batch(y)
    prediction, cache = _forward(model, x, masks)
    if prediction.shape != y.shape:
        raise DataError(f"Target shape {y.shape} does not match prediction shape {prediction.shape}")
    residual = prediction - y
    loss = float(np.mean(residual ** 2))
    grads = _backward(model, 2.0 * residual / residual.size, cache)
    return loss, grads


def gradient_check(model: TrainedModel, x, y, masks: Optional[Sequence[DropoutMasks]] = None) -> float:
    """
    Largest relative gap between BPTT gradients and central finite differences.

    The relative error of one entry is |a - f| / max(|a| + |f|, 1e-5) so
    vanishing gradients are compared in absolute terms. Dropout masks, when
    given, stay fixed across all perturbed evaluations.
    """
    _, analytic = loss_and_gradients(model, x, y, masks)
    worst = 0.0
    for name, param in model.parameters().items():
        flat = param.reshape(-1)
        grad = analytic[name].reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + FD_STEP
            plus, _ = loss_and_gradients(model, x, y, masks)
            flat[k] = original - FD_STEP
            minus, _ = loss_and_gradients(model, x, y, masks)
            flat[k] = original
            numeric = (plus - minus) / (2.0 * FD_STEP)
            error = abs(grad[k] - numeric) / max(abs(grad[k]) + abs(numeric), 1e-5)
            worst = max(worst, error)
    return worst


class AdamOptimizer:
    """Bias-corrected first/second moment averages over named parameters."""

    def __init__(self, parameters: Dict[str, np.ndarray], cfg: TrainConfig):
        self.parameters = parameters
        self.learning_rate = cfg.learning_rate
        self.beta1, self.beta2, self.epsilon = cfg.beta1, cfg.beta2, cfg.epsilon
        self.m = {k: np.zeros_like(v) for k, v in parameters.items()}
        self.v = {k: np.zeros_like(v) for k, v in parameters.items()}
        self.steps = 0

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for name, param in self.parameters.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            param -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def sequence_windows(sequences: Sequence[Tuple[np.ndarray, np.ndarray]], window_length: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    All stride-1 windows of a common length over every (input, target) pair.

    The window is shortened to the shortest sequence when needed.
    """
    if not sequences:
        raise DataError("No training sequences")
    length = min(window_length, min(x.shape[0] for x, _ in sequences))
    xs, ys = [], []
    for x, y in sequences:
        for start in range(x.shape[0] - length + 1):
            xs.append(x[start:start + length])
            ys.append(y[start:start + length])
    return np.stack(xs), np.stack(ys)


def task_dims(task: LearningTask, data: ExperimentSet) -> Tuple[Dict[str, int], Dict[str, int]]:
    inputs = {name: data.node(name).dim for name in task.inputs}
    outputs = {name: data.node(name).dim for name in task.outputs}
    return inputs, outputs


def _task_normalizer(normalizer: Normalizer, task: LearningTask) -> Normalizer:
    names = list(task.inputs) + list(task.outputs)
    return Normalizer({n: normalizer.mean[n] for n in names}, {n: normalizer.std[n] for n in names})


def train_task(
    task: LearningTask,
    data: ExperimentSet,
    cfg: TrainConfig,
    normalizer: Optional[Normalizer] = None,
) -> TrainedModel:
    """
    Fit one recurrent surrogate on the calibration split.

    Mini-batches are stride-1 windows of window_length steps; every window
    gets fresh dropout masks each epoch. The loss is the mean squared error
    in normalized units.

    Args:
        task: Inputs and outputs to learn
        data: Experiments with the calibration/test split
        cfg: Architecture and optimizer settings
        normalizer: Statistics fitted on the calibration split (fitted here when None)

    Returns:
        TrainedModel: Weights, normalizer, loss history and final deterministic loss
    """
    if not data.calibration:
        raise DataError(f"Task {task.key}: calibration split is empty")
    for name in list(task.inputs) + list(task.outputs):
        data.node(name)
    if normalizer is None:
        normalizer = fit_normalizer(data, data.calibration)

    input_dims, output_dims = task_dims(task, data)
    model = init_model(task, input_dims, output_dims, cfg, _task_normalizer(normalizer, task))

    sequences = []
    for experiment_id in data.calibration:
        experiment = data.get(experiment_id)
        x = model.encode_inputs(experiment.series)
        y = np.concatenate([normalizer.normalize(n, experiment.series[n]) for n in task.outputs], axis=1)
        sequences.append((x, y))
    windows_x, windows_y = sequence_windows(sequences, cfg.window_length)
    n_windows = windows_x.shape[0]
    logger.info(f"Training task {task.key}: {n_windows} windows of {windows_x.shape[1]} steps, "
                f"{cfg.layers}x{cfg.hidden_units} GRU, dropout {cfg.dropout_rate}, {cfg.epochs} epochs")

    rng = np.random.default_rng(derive_seed(cfg.seed, 'batches', task.key))
    optimizer = AdamOptimizer(model.parameters(), cfg)
    best, stale = float('inf'), 0
    report_every = max(1, cfg.epochs // 10)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n_windows)
        total = 0.0
        for start in range(0, n_windows, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            masks = model_masks(model, cfg.dropout_rate, rng, batch=len(batch))
            loss, grads = loss_and_gradients(model, windows_x[batch], windows_y[batch], masks)
            if not np.isfinite(loss):
                raise NumericalError(f"Task {task.key}: loss became {loss} in epoch {epoch + 1}")
            optimizer.step(grads)
            total += loss * len(batch)
        epoch_loss = total / n_windows
        model.loss_history.append(epoch_loss)

        if cfg.lr_plateau_factor is not None:
            if epoch_loss < best:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= cfg.plateau_patience:
                    optimizer.learning_rate = max(optimizer.learning_rate * cfg.lr_plateau_factor, cfg.min_learning_rate)
                    stale = 0
                    logger.debug(f"Task {task.key}: learning rate reduced to {optimizer.learning_rate:.3g}")
        if (epoch + 1) % report_every == 0:
            logger.info(f"  task {task.key} epoch {epoch + 1}/{cfg.epochs}: loss {epoch_loss:.6f}")

    final_loss, _ = loss_and_gradients(model, windows_x, windows_y)
    if not np.isfinite(final_loss):
        raise NumericalError(f"Task {task.key}: final loss is {final_loss}")
    model.final_loss = final_loss
    logger.info(f"✓ Task {task.key} trained (final loss {final_loss:.6f})")
    return model


def predict_deterministic(model: TrainedModel, series: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Dropout-free rollout returning each output node in physical units."""
    if isinstance(series, Experiment):
        series = series.series
    return model.decode_outputs(forward_sequence(model.encode_inputs(series), model))


def model_to_json(model: TrainedModel) -> dict:
    return {
        'task': {'inputs': list(model.task.inputs), 'outputs': list(model.task.outputs),
                 'order_index': model.task.order_index},
        'config': dataclasses.asdict(model.config),
        'input_dims': model.input_dims,
        'output_dims': model.output_dims,
        'layers': [{name: value.tolist() for name, value in layer.arrays().items()} for layer in model.layers],
        'W_Y': model.W_Y.tolist(),
        'b_Y': model.b_Y.tolist(),
        'normalizer': model.normalizer.to_dict() if model.normalizer is not None else None,
        'final_loss': model.final_loss,
        'loss_history': model.loss_history,
    }


def model_from_json(data: dict) -> TrainedModel:
    try:
        task = LearningTask(tuple(data['task']['inputs']), tuple(data['task']['outputs']),
                            int(data['task'].get('order_index', 0)))
        layers = [
            GruWeights(**{name: np.asarray(layer[name], dtype=float) for name in GATE_NAMES})
            for layer in data['layers']
        ]
        normalizer = Normalizer.from_dict(data['normalizer']) if data.get('normalizer') else None
        return TrainedModel(
            task=task,
            config=TrainConfig(**data['config']),
            layers=layers,
            W_Y=np.asarray(data['W_Y'], dtype=float),
            b_Y=np.asarray(data['b_Y'], dtype=float),
            input_dims={k: int(v) for k, v in data['input_dims'].items()},
            output_dims={k: int(v) for k, v in data['output_dims'].items()},
            normalizer=normalizer,
            final_loss=float(data.get('final_loss', float('nan'))),
            loss_history=[float(v) for v in data.get('loss_history', [])],
        )
    except (KeyError, TypeError) as e:
        raise DataError(f"Malformed model JSON: {e}")


def save_model(model: TrainedModel, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model_to_json(model), f)


def load_model(path: str) -> TrainedModel:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return model_from_json(json.load(f))
    except FileNotFoundError:
        raise DataError(f"Model file not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"Model file {path} is not valid JSON: {e}")
