"""Tests for the recurrent surrogate: cell, rollout, gradients and training."""

import numpy as np
import pytest

from config import TrainConfig
from dataset import Experiment, ExperimentSet, NodeSchema
from errors import DataError
from graphops import LearningTask
from surrogate import (
    DropoutMasks, GruWeights, draw_masks, forward_sequence, gradient_check, gru_cell, init_model,
    load_model, loss_and_gradients, model_masks, predict_deterministic, save_model, sequence_windows,
    sigmoid, train_task,
)

TASK = LearningTask(('X',), ('Y',))


def _tiny_cfg(**overrides):
    values = dict(hidden_units=3, layers=2, dropout_rate=0.0, epochs=0, batch_size=4,
                  learning_rate=0.01, seed=5, window_length=6)
    values.update(overrides)
    return TrainConfig(**values)


def _sine_data(length=40, experiments=2):
    schema = [NodeSchema('X', ('x',), role='root'), NodeSchema('Y', ('y',), role='leaf')]
    experiment_list = []
    for k in range(experiments):
        x = np.linspace(-1.0, 1.0, length) + 0.1 * k
        experiment_list.append(Experiment(f"e{k}", {'X': x, 'Y': np.sin(2.0 * x)}))
    ids = [e.id for e in experiment_list]
    return ExperimentSet(experiment_list, schema, ids, [])


def _weights(inputs, hidden, value=0.0, b_z=0.0, b_h=0.0):
    w = GruWeights.zeros(inputs, hidden)
    for name, array in w.arrays().items():
        array[...] = value
    w.b_z[...] = b_z
    w.b_h[...] = b_h
    return w


def test_gru_cell_zero_weights():
    h = gru_cell(np.array([0.7]), np.zeros(2), _weights(1, 2))
    np.testing.assert_array_equal(h, np.zeros(2))

    # z = 0.5 and i = 0, so the state halves
    h = gru_cell(np.array([0.7]), np.array([1.0, -2.0]), _weights(1, 2))
    np.testing.assert_allclose(h, [0.5, -1.0])


def test_gru_cell_saturated_biases():
    h = gru_cell(np.array([0.3]), np.zeros(2), _weights(1, 2, b_z=-20.0, b_h=20.0))
    np.testing.assert_allclose(h, np.ones(2), atol=1e-3)


def test_gru_cell_with_zero_masks_depends_only_on_biases():
    w = _weights(2, 2, value=0.4, b_z=0.3, b_h=-0.2)
    masks = DropoutMasks(np.zeros(2), np.zeros(2), 0.5)
    h_prev = np.array([0.8, -0.4])
    expected = sigmoid(0.3) * h_prev + (1.0 - sigmoid(0.3)) * np.tanh(-0.2)
    np.testing.assert_allclose(gru_cell(np.array([1.0, 2.0]), h_prev, w, masks), expected, rtol=1e-12)


def test_gru_cell_shape_mismatch():
    with pytest.raises(DataError, match='shape mismatch'):
        gru_cell(np.zeros(3), np.zeros(2), _weights(1, 2))


def test_weights_validate_shapes():
    w = GruWeights.zeros(2, 3)
    with pytest.raises(DataError):
        GruWeights(w.W_z, w.W_r, w.W_h, w.U_z, w.U_r, np.zeros((3, 2)), w.b_z, w.b_r, w.b_h)


def test_zero_model_outputs_bias():
    model = init_model(TASK, {'X': 1}, {'Y': 1}, _tiny_cfg())
    for name, array in model.parameters().items():
        array[...] = 0.0
    model.b_Y[...] = 0.25
    y = forward_sequence(np.random.default_rng(0).standard_normal((7, 1)), model)
    np.testing.assert_array_equal(y, np.full((7, 1), 0.25))


def test_hand_unrolled_recurrence():
    """Single layer, two units, scalar input over three steps."""
    cfg = _tiny_cfg(hidden_units=2, layers=1)
    model = init_model(TASK, {'X': 1}, {'Y': 1}, cfg)
    layer = model.layers[0]
    x = np.array([[0.5], [-1.0], [0.25]])

    h = np.zeros(2)
    expected = []
    for t in range(3):
        z = 1.0 / (1.0 + np.exp(-(layer.W_z @ x[t] + layer.U_z @ h + layer.b_z)))
        r = 1.0 / (1.0 + np.exp(-(layer.W_r @ x[t] + layer.U_r @ h + layer.b_r)))
        i = np.tanh(layer.W_h @ x[t] + layer.U_h @ (r * h) + layer.b_h)
        h = z * h + (1.0 - z) * i
        expected.append(h @ model.W_Y + model.b_Y)

    np.testing.assert_allclose(forward_sequence(x, model), np.array(expected), atol=1e-6)


def test_draw_masks():
    rng = np.random.default_rng(0)
    masks = draw_masks(rng, 3, 4, 0.0)
    assert np.all(masks.m_x == 1.0) and np.all(masks.m_h == 1.0)

    masks = draw_masks(rng, 2000, 1, 0.25)
    assert set(np.unique(masks.m_x)) <= {0.0, 1.0 / 0.75}
    assert abs(masks.m_x.mean() - 1.0) < 0.1

    with pytest.raises(DataError):
        draw_masks(rng, 2, 2, 1.0)


def test_no_dropout_is_seed_independent():
    model = init_model(TASK, {'X': 1}, {'Y': 1}, _tiny_cfg())
    x = np.linspace(0.0, 1.0, 9)[:, None]
    first = forward_sequence(x, model, model_masks(model, 0.0, np.random.default_rng(1)))
    second = forward_sequence(x, model, model_masks(model, 0.0, np.random.default_rng(2)))
    np.testing.assert_array_equal(first, second)


@pytest.mark.parametrize('seed', range(20))
def test_gradient_check_random_model(seed):
    """Odd seeds use two layers and fixed dropout masks."""
    layers = 1 + seed % 2
    cfg = _tiny_cfg(hidden_units=3, layers=layers)
    model = init_model(LearningTask(('A', 'B'), ('C',)), {'A': 1, 'B': 1}, {'C': 2}, cfg)
    rng = np.random.default_rng(seed)
    for array in model.parameters().values():
        array[...] = rng.uniform(-0.5, 0.5, array.shape)
    x = rng.standard_normal((2, 4, 2))
    y = rng.standard_normal((2, 4, 2))
    masks = model_masks(model, 0.3, rng, batch=2) if layers == 2 else None
    assert gradient_check(model, x, y, masks) < 1e-4


def test_zero_model_has_zero_gradients():
    model = init_model(TASK, {'X': 1}, {'Y': 1}, _tiny_cfg(hidden_units=2, layers=1))
    for array in model.parameters().values():
        array[...] = 0.0
    loss, grads = loss_and_gradients(model, np.zeros((5, 1)), np.zeros((5, 1)))
    assert loss == 0.0
    for value in grads.values():
        assert np.all(np.abs(value) < 1e-8)


def test_sequence_windows():
    a = (np.arange(5.0)[:, None], np.arange(5.0)[:, None])
    b = (np.arange(3.0)[:, None], np.arange(3.0)[:, None])
    xs, ys = sequence_windows([a, b], 4)
    # window shrinks to the shortest sequence (3): 3 windows from a, 1 from b
    assert xs.shape == (4, 3, 1)
    np.testing.assert_array_equal(xs[1, :, 0], [1.0, 2.0, 3.0])
    with pytest.raises(DataError):
        sequence_windows([], 3)


def test_zero_epochs_returns_initialization():
    data = _sine_data()
    cfg = _tiny_cfg(epochs=0)
    model = train_task(TASK, data, cfg)
    reference = init_model(TASK, {'X': 1}, {'Y': 1}, cfg)
    for name, array in reference.parameters().items():
        np.testing.assert_array_equal(model.parameters()[name], array)
    assert model.loss_history == []
    assert np.isfinite(model.final_loss)


def test_training_is_deterministic():
    data = _sine_data()
    cfg = _tiny_cfg(epochs=3, dropout_rate=0.2)
    first = train_task(TASK, data, cfg)
    second = train_task(TASK, data, cfg)
    assert first.loss_history == second.loss_history
    for name, array in first.parameters().items():
        np.testing.assert_array_equal(second.parameters()[name], array)


def test_training_reduces_loss():
    data = _sine_data()
    model = train_task(TASK, data, _tiny_cfg(hidden_units=8, layers=1, epochs=60, learning_rate=0.02))
    assert model.loss_history[-1] < model.loss_history[0]


def test_training_needs_calibration_data():
    data = _sine_data()
    empty = ExperimentSet(data.experiments, data.schema, [], [e.id for e in data.experiments])
    with pytest.raises(DataError, match='calibration split is empty'):
        train_task(TASK, empty, _tiny_cfg())


@pytest.mark.slow
def test_sine_toy_converges():
    """y = sin(x) on a 200-step ramp; final loss well below the first epoch."""
    schema = [NodeSchema('X', ('x',), role='root'), NodeSchema('Y', ('y',), role='leaf')]
    x = np.linspace(-3.0, 3.0, 200)
    data = ExperimentSet([Experiment('ramp', {'X': x, 'Y': np.sin(x)})], schema, ['ramp'], [])
    cfg = TrainConfig(hidden_units=16, layers=1, dropout_rate=0.0, epochs=1000, batch_size=32,
                      learning_rate=0.001, seed=0, window_length=20)
    model = train_task(TASK, data, cfg)
    assert model.loss_history[-1] <= 0.1 * model.loss_history[0]


def test_model_save_and_load(tmp_path):
    data = _sine_data()
    model = train_task(TASK, data, _tiny_cfg(epochs=1))
    path = tmp_path / 'model.json'
    save_model(model, str(path))
    restored = load_model(str(path))

    assert restored.task == model.task
    assert restored.config == model.config
    series = data.get('e0').series
    np.testing.assert_allclose(predict_deterministic(restored, series)['Y'],
                               predict_deterministic(model, series)['Y'], rtol=1e-12, atol=1e-12)


def test_predict_returns_physical_units():
    data = _sine_data()
    model = train_task(TASK, data, _tiny_cfg())
    prediction = predict_deterministic(model, data.get('e1'))
    assert prediction['Y'].shape == (40, 1)
    with pytest.raises(DataError, match="missing input node 'X'"):
        predict_deterministic(model, {'Z': np.zeros(4)})
