"""Toy detection head: losses, analytic gradients, optimizers, training."""

import math
from dataclasses import replace

import numpy as np
import pytest

from skypaste.core import derive_stream
from skypaste.errors import EmptySplitError
from skypaste.toytrain import (
    AdamState,
    EarlyStopper,
    Gradients,
    LossBreakdown,
    Target,
    ToyModel,
    TrainConfig,
    TrainSample,
    batch_loss,
    grad,
    loss_total,
    make_toy_data,
    optimizer_step,
    render_history_csv,
    train_loop,
)


def target(obj=1, class_id=0, num_classes=2, box=None):
    onehot = np.zeros(num_classes)
    onehot[class_id] = 1.0
    return Target(obj=obj, class_onehot=onehot, box=np.zeros(4) if box is None else box)


def tiny_model(fill=0.0, feat_dim=1, num_classes=2):
    out_dim = 1 + num_classes + 4
    return ToyModel(
        weight=np.full((out_dim, feat_dim), fill),
        bias=np.zeros(out_dim),
        num_classes=num_classes,
    )


def random_batch(rng, n, feat_dim=4, num_classes=2):
    return make_toy_data(n, feat_dim, num_classes, derive_stream(int(rng.integers(1 << 30)), 0))


# --- loss -----------------------------------------------------------------

def test_loss_zero_logits_positive_sample():
    lb = loss_total(np.zeros(7), target(obj=1))
    assert lb.l_obj == pytest.approx(math.log(2.0), abs=1e-12)
    assert lb.l_cls == pytest.approx(math.log(2.0), abs=1e-12)
    assert lb.l_bbox == 0.0


def test_loss_zero_logits_negative_sample():
    lb = loss_total(np.zeros(7), target(obj=0))
    assert lb.l_obj == pytest.approx(math.log(2.0), abs=1e-12)
    assert lb.l_cls == 0.0
    assert lb.l_bbox == 0.0


def test_loss_total_is_exact_component_sum(rng):
    for _ in range(20):
        pred = rng.normal(size=7)
        lb = loss_total(pred, target(obj=1, box=rng.uniform(size=4)))
        assert lb.total == lb.l_obj + lb.l_cls + lb.l_bbox


def test_loss_box_term_is_quarter_sse():
    pred = np.zeros(7)
    pred[3:] = 1.0
    lb = loss_total(pred, target(obj=1))
    assert lb.l_bbox == 1.0  # mean of four unit squared errors


def test_loss_negative_sample_ignores_class_and_box():
    pred = np.array([0.0, 5.0, -3.0, 9.0, 9.0, 9.0, 9.0])
    lb = loss_total(pred, target(obj=0))
    assert lb.l_cls == 0.0 and lb.l_bbox == 0.0


def test_loss_objectness_clamp_keeps_loss_finite():
    pred = np.zeros(7)
    pred[0] = 1e6
    lb = loss_total(pred, target(obj=0))
    assert math.isfinite(lb.l_obj)
    assert lb.l_obj == pytest.approx(30.0, abs=0.01)


def test_batch_loss_averages_components():
    model = tiny_model()
    batch = [
        TrainSample(x=np.array([1.0]), target=target(obj=1)),
        TrainSample(x=np.array([1.0]), target=target(obj=0)),
    ]
    lb = batch_loss(model, batch)
    assert lb.l_obj == pytest.approx(math.log(2.0), abs=1e-12)
    assert lb.l_cls == pytest.approx(0.5 * math.log(2.0), abs=1e-12)


def test_batch_loss_rejects_empty():
    with pytest.raises(EmptySplitError):
        batch_loss(tiny_model(), [])


# --- gradients ------------------------------------------------------------

def numeric_gradients(model, batch, h=1e-5):
    g_w = np.zeros_like(model.weight)
    for idx in np.ndindex(*model.weight.shape):
        w_plus, w_minus = model.weight.copy(), model.weight.copy()
        w_plus[idx] += h
        w_minus[idx] -= h
        g_w[idx] = (
            batch_loss(replace(model, weight=w_plus), batch).total
            - batch_loss(replace(model, weight=w_minus), batch).total
        ) / (2 * h)
    g_b = np.zeros_like(model.bias)
    for j in range(model.bias.size):
        b_plus, b_minus = model.bias.copy(), model.bias.copy()
        b_plus[j] += h
        b_minus[j] -= h
        g_b[j] = (
            batch_loss(replace(model, bias=b_plus), batch).total
            - batch_loss(replace(model, bias=b_minus), batch).total
        ) / (2 * h)
    return Gradients(weight=g_w, bias=g_b)


def relative_error(a, b):
    num = np.linalg.norm(a - b)
    return num / max(1e-8, np.linalg.norm(a) + np.linalg.norm(b))


def test_grad_matches_finite_differences(rng):
    for trial in range(10):
        model = ToyModel.initialize(4, 2, derive_stream(900, trial))
        batch = random_batch(rng, 6)
        analytic = grad(model, batch)
        numeric = numeric_gradients(model, batch)
        assert relative_error(analytic.weight, numeric.weight) <= 1e-4
        assert relative_error(analytic.bias, numeric.bias) <= 1e-4


def test_grad_duplicated_batch_is_unchanged(rng):
    model = ToyModel.initialize(4, 2, derive_stream(901, 0))
    sample = random_batch(rng, 1)[0]
    single = grad(model, [sample])
    doubled = grad(model, [sample, sample])
    assert np.array_equal(single.weight, doubled.weight)
    assert np.array_equal(single.bias, doubled.bias)


def test_grad_clamped_objectness_is_flat():
    model = tiny_model(fill=0.0)
    sample = TrainSample(x=np.array([1.0]), target=target(obj=0))
    saturated = replace(model, bias=np.array([100.0, 0, 0, 0, 0, 0, 0]))
    g = grad(saturated, [sample])
    assert g.bias[0] == 0.0  # outside the clamp window the loss is flat


def test_grad_rejects_empty():
    with pytest.raises(EmptySplitError):
        grad(tiny_model(), [])


# --- optimizers -----------------------------------------------------------

def test_plain_gd_step_is_exact():
    model = tiny_model(fill=1.0)
    grads = Gradients(
        weight=np.full_like(model.weight, 2.0), bias=np.zeros_like(model.bias)
    )
    config = TrainConfig(optimizer="gd", lr=0.1)
    stepped, state = optimizer_step(model, grads, None, config)
    assert (stepped.weight == 0.8).all()
    assert (stepped.bias == 0.0).all()
    assert state is None


def test_gd_zero_gradient_is_identity():
    model = tiny_model(fill=0.3)
    grads = Gradients(np.zeros_like(model.weight), np.zeros_like(model.bias))
    stepped, _ = optimizer_step(model, grads, None, TrainConfig(optimizer="gd"))
    assert np.array_equal(stepped.weight, model.weight)


def test_adamw_first_step_is_signed_learning_rate():
    """With zeroed state, bias correction makes step one ~= -lr * sign(g)."""
    model = tiny_model(fill=0.0)
    grads = Gradients(
        weight=np.full_like(model.weight, 4.0), bias=np.full_like(model.bias, -4.0)
    )
    config = TrainConfig(optimizer="adamw", lr=0.001667, weight_decay=0.0)
    stepped, state = optimizer_step(model, grads, None, config)
    assert stepped.weight[0, 0] == pytest.approx(-0.001667, rel=1e-6)
    assert stepped.bias[0] == pytest.approx(0.001667, rel=1e-6)
    assert state.t == 1


def test_adamw_decay_is_decoupled():
    """Zero gradient: weights still shrink by lr*decay, biases do not."""
    model = ToyModel(
        weight=np.ones((7, 1)), bias=np.ones(7), num_classes=2
    )
    grads = Gradients(np.zeros_like(model.weight), np.zeros_like(model.bias))
    config = TrainConfig(optimizer="adamw", lr=0.1, weight_decay=0.0005)
    stepped, _ = optimizer_step(model, grads, None, config)
    assert stepped.weight[0, 0] == pytest.approx(1.0 - 0.1 * 0.0005, abs=1e-15)
    assert stepped.bias[0] == 1.0


def test_adamw_state_advances():
    model = tiny_model(fill=0.0)
    grads = Gradients(
        weight=np.full_like(model.weight, 1.0), bias=np.zeros_like(model.bias)
    )
    config = TrainConfig(optimizer="adamw")
    model, state = optimizer_step(model, grads, None, config)
    model, state = optimizer_step(model, grads, state, config)
    assert state.t == 2
    assert (state.v_weight > 0).all()


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)


# --- early stopping -------------------------------------------------------

def test_early_stopper_trace():
    stopper = EarlyStopper(patience=2)
    decisions = [
        stopper.update(epoch, loss)
        for epoch, loss in enumerate([1.0, 0.9, 0.95, 0.96], start=1)
    ]
    assert decisions == [True, True, True, False]
    assert stopper.best_epoch == 2
    assert stopper.best_loss == 0.9


def test_early_stopper_equal_loss_is_not_improvement():
    stopper = EarlyStopper(patience=1)
    assert stopper.update(1, 0.5)
    assert not stopper.update(2, 0.5)


def test_early_stopper_never_fires_while_improving():
    stopper = EarlyStopper(patience=1)
    assert all(stopper.update(e, 1.0 / e) for e in range(1, 11))


def test_early_stopper_patience_longer_than_run():
    stopper = EarlyStopper(patience=5)
    assert all(stopper.update(e, loss) for e, loss in enumerate([0.5, 0.6, 0.7], 1))


def test_early_stopper_validates_patience():
    with pytest.raises(ValueError):
        EarlyStopper(patience=0)


# --- train loop -----------------------------------------------------------

def toy_splits(n_train=48, n_val=16, seed=5):
    data = make_toy_data(n_train + n_val, 8, 2, derive_stream(seed, 0))
    return data[:n_train], data[n_train:]


def test_train_loop_rejects_empty_splits():
    train, val = toy_splits()
    with pytest.raises(EmptySplitError):
        train_loop([], val)
    with pytest.raises(EmptySplitError):
        train_loop(train, [])


def test_train_loop_epochs_are_contiguous():
    train, val = toy_splits()
    _, history = train_loop(train, val, TrainConfig(epochs=5, patience=10))
    assert [rec.epoch for rec in history.epochs] == [1, 2, 3, 4, 5]
    assert not history.stopped_early


def test_train_loop_returns_best_epoch_snapshot():
    train, val = toy_splits()
    model, history = train_loop(train, val, TrainConfig(epochs=40, patience=5))
    best_val = min(rec.val_loss for rec in history.epochs)
    assert batch_loss(model, val).total == best_val
    assert history.epochs[history.best_epoch - 1].val_loss == best_val


def test_train_loop_early_stop_accounting():
    train, val = toy_splits()
    config = TrainConfig(epochs=500, patience=3)
    _, history = train_loop(train, val, config)
    if history.stopped_early:
        assert len(history.epochs) < config.epochs
        assert history.best_epoch == len(history.epochs) - config.patience


def test_train_loop_deterministic():
    train, val = toy_splits()
    config = TrainConfig(epochs=8, patience=10)
    model_a, history_a = train_loop(train, val, config, seed=3)
    model_b, history_b = train_loop(train, val, config, seed=3)
    assert history_a == history_b
    assert np.array_equal(model_a.weight, model_b.weight)


def test_train_loop_seed_changes_init():
    train, val = toy_splits()
    config = TrainConfig(epochs=1, patience=10)
    model_a, _ = train_loop(train, val, config, seed=1)
    model_b, _ = train_loop(train, val, config, seed=2)
    assert not np.array_equal(model_a.weight, model_b.weight)


def test_full_batch_gd_descends_monotonically():
    train, val = toy_splits(n_train=32, n_val=8)
    config = TrainConfig(
        optimizer="gd", lr=0.01, batch_size=64, epochs=30, patience=30
    )
    _, history = train_loop(train, val, config)
    losses = [rec.train_loss for rec in history.epochs]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_training_beats_initial_model():
    train, val = toy_splits(n_train=96, n_val=32)
    model, history = train_loop(train, val, TrainConfig(epochs=60, patience=60))
    assert batch_loss(model, val).total < history.epochs[0].val_loss


# --- data generator and rendering -----------------------------------------

def test_make_toy_data_shapes_and_ranges():
    samples = make_toy_data(64, 8, 3, derive_stream(2, 0))
    assert len(samples) == 64
    objs = [s.target.obj for s in samples]
    assert set(objs) <= {0, 1} and 0 < sum(objs) < 64
    for s in samples[:10]:
        assert s.x.shape == (8,)
        assert s.target.class_onehot.sum() == 1.0
        assert ((s.target.box > 0.0) & (s.target.box < 1.0)).all()


def test_render_history_csv_layout():
    train, val = toy_splits()
    _, history = train_loop(train, val, TrainConfig(epochs=3, patience=10))
    lines = render_history_csv(history).splitlines()
    assert lines[0] == "epoch,train_loss,val_loss"
    assert len(lines) == 4
    assert lines[1].startswith("1,")
