"""A desk-scale one-object detector head: linear model, composite loss,
analytic gradients, plain gradient descent or AdamW, and an early-stopped
training loop with best-epoch snapshotting.

The model maps a feature vector to ``[objectness logit | C class logits |
4 box values]``. The loss is the unweighted sum of binary cross-entropy on
objectness, softmax cross-entropy on the class (only for positive targets),
and mean squared error on the box (only for positive targets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import RngStream, derive_stream
from .errors import EmptySplitError

LOGIT_CLAMP = 30.0


@dataclass(frozen=True)
class ToyModel:
    """Linear head: ``z = weight @ x + bias`` with arity ``1 + C + 4``."""

    weight: np.ndarray
    bias: np.ndarray
    num_classes: int

    def __post_init__(self):
        out_dim = 1 + self.num_classes + 4
        if self.weight.shape != (out_dim, self.feat_dim):
            raise ValueError(
                f"weight must be ({out_dim}, feat_dim), got {self.weight.shape}"
            )
        if self.bias.shape != (out_dim,):
            raise ValueError(f"bias must be ({out_dim},), got {self.bias.shape}")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ValueError("model parameters must be finite")

    @property
    def feat_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return 1 + self.num_classes + 4

    @classmethod
    def initialize(
        cls, feat_dim: int, num_classes: int, rng: RngStream, scale: float = 0.1
    ) -> "ToyModel":
        out_dim = 1 + num_classes + 4
        weight = rng.normals((out_dim, feat_dim)) * scale
        bias = np.zeros(out_dim)
        return cls(weight=weight, bias=bias, num_classes=num_classes)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Raw outputs for one feature vector or a (n, d) batch."""
        return x @ self.weight.T + self.bias


@dataclass(frozen=True)
class Target:
    """Supervision for one sample: objectness flag, class one-hot, box."""

    obj: int
    class_onehot: np.ndarray
    box: np.ndarray

    def __post_init__(self):
        if self.obj not in (0, 1):
            raise ValueError("obj must be 0 or 1")
        if self.box.shape != (4,):
            raise ValueError("box must be a 4-vector")


@dataclass(frozen=True)
class TrainSample:
    x: np.ndarray
    target: Target


@dataclass(frozen=True)
class LossBreakdown:
    """Loss components; ``total`` is constructed as their exact sum."""

    l_obj: float
    l_cls: float
    l_bbox: float
    total: float

    @classmethod
    def of(cls, l_obj: float, l_cls: float, l_bbox: float) -> "LossBreakdown":
        return cls(l_obj, l_cls, l_bbox, l_obj + l_cls + l_bbox)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def loss_total(pred: np.ndarray, target: Target) -> LossBreakdown:
    """Composite loss for one sample's raw model output."""
    num_classes = target.class_onehot.shape[0]
    z_obj = float(np.clip(pred[0], -LOGIT_CLAMP, LOGIT_CLAMP))
    p = _sigmoid(z_obj)
    if target.obj == 1:
        l_obj = -math.log(p)
    else:
        l_obj = -math.log(1.0 - p)

    l_cls = 0.0
    l_bbox = 0.0
    if target.obj == 1:
        logits = pred[1 : 1 + num_classes]
        shifted = logits - np.max(logits)
        log_z = math.log(float(np.sum(np.exp(shifted))))
        log_softmax = shifted - log_z
        l_cls = -float(np.dot(target.class_onehot, log_softmax))
        diff = pred[1 + num_classes :] - target.box
        l_bbox = float(np.mean(diff * diff))
    return LossBreakdown.of(l_obj, l_cls, l_bbox)


def batch_loss(model: ToyModel, batch: Sequence[TrainSample]) -> LossBreakdown:
    """Mean loss over a batch, component-wise."""
    if not batch:
        raise EmptySplitError("batch must be non-empty")
    sums = [0.0, 0.0, 0.0]
    for sample in batch:
        lb = loss_total(model.forward(sample.x), sample.target)
        sums[0] += lb.l_obj
        sums[1] += lb.l_cls
        sums[2] += lb.l_bbox
    n = len(batch)
    return LossBreakdown.of(sums[0] / n, sums[1] / n, sums[2] / n)


@dataclass(frozen=True)
class Gradients:
    weight: np.ndarray
    bias: np.ndarray


def grad(model: ToyModel, batch: Sequence[TrainSample]) -> Gradients:
    """Analytic gradient of the mean batch loss w.r.t. weight and bias.

    The objectness clamp makes the loss flat outside |z| <= 30, so clamped
    samples contribute zero objectness gradient.
    """
    if not batch:
        raise EmptySplitError("batch must be non-empty")
    n = len(batch)
    num_classes = model.num_classes
    x_mat = np.stack([s.x for s in batch])
    z = model.forward(x_mat)
    dz = np.zeros_like(z)

    for i, sample in enumerate(batch):
        t = sample.target
        z_obj = z[i, 0]
        if -LOGIT_CLAMP <= z_obj <= LOGIT_CLAMP:
            dz[i, 0] = _sigmoid(float(z_obj)) - t.obj
        if t.obj == 1:
            logits = z[i, 1 : 1 + num_classes]
            shifted = np.exp(logits - np.max(logits))
            softmax = shifted / np.sum(shifted)
            dz[i, 1 : 1 + num_classes] = softmax - t.class_onehot
            dz[i, 1 + num_classes :] = 2.0 * (z[i, 1 + num_classes :] - t.box) / 4.0

    dz /= n
    return Gradients(weight=dz.T @ x_mat, bias=dz.sum(axis=0))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    patience: int = 10
    lr: float = 0.001667
    batch_size: int = 16
    optimizer: str = "adamw"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0005
    bias_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.lr <= 0.0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("gd", "adamw"):
            raise ValueError('optimizer must be "gd" or "adamw"')


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m_weight: np.ndarray
    v_weight: np.ndarray
    m_bias: np.ndarray
    v_bias: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, model: ToyModel) -> "AdamState":
        return cls(
            m_weight=np.zeros_like(model.weight),
            v_weight=np.zeros_like(model.weight),
            m_bias=np.zeros_like(model.bias),
            v_bias=np.zeros_like(model.bias),
        )


def optimizer_step(
    model: ToyModel,
    grads: Gradients,
    state: Optional[AdamState],
    config: TrainConfig,
) -> tuple[ToyModel, Optional[AdamState]]:
    """One update. "gd" is the literal descent step ``W - lr * g``; "adamw"
    is the bias-corrected Adam step with decoupled weight decay applied per
    parameter group (weights decay, biases do not).
    """
    if config.optimizer == "gd":
        new = replace(
            model,
            weight=model.weight - config.lr * grads.weight,
            bias=model.bias - config.lr * grads.bias,
        )
        return new, state

    if state is None:
        state = AdamState.zeros(model)
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2

    def adam(param, g, m, v, decay):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g * g
        m_hat = m_new / (1.0 - b1**t)
        v_hat = v_new / (1.0 - b2**t)
        stepped = param - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        if decay:
            stepped = stepped - config.lr * decay * param
        return stepped, m_new, v_new

    w_new, mw, vw = adam(
        model.weight, grads.weight, state.m_weight, state.v_weight, config.weight_decay
    )
    b_new, mb, vb = adam(
        model.bias, grads.bias, state.m_bias, state.v_bias, config.bias_decay
    )
    return (
        replace(model, weight=w_new, bias=b_new),
        AdamState(m_weight=mw, v_weight=vw, m_bias=mb, v_bias=vb, t=t),
    )


class EarlyStopper:
    """Patience counter over a validation-loss sequence.

    ``update`` returns True while training should continue; improvement is
    strict decrease below the best loss seen so far.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return self.bad_epochs < self.patience


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass(frozen=True)
class TrainHistory:
    epochs: tuple[EpochRecord, ...]
    best_epoch: int
    stopped_early: bool


def train_loop(
    train: Sequence[TrainSample],
    val: Sequence[TrainSample],
    config: TrainConfig = TrainConfig(),
    init_model: Optional[ToyModel] = None,
    seed: int = 0,
) -> tuple[ToyModel, TrainHistory]:
    """Train with fixed-order batches and return the best-epoch snapshot.

    Per epoch: consecutive slices of ``batch_size`` over the training set
    (no shuffling — the data generator already randomizes order), one
    optimizer step per batch, then the validation loss over the full val
    set. Stops once the validation loss has gone ``patience`` consecutive
    epochs without a strict improvement.
    """
    if not train:
        raise EmptySplitError("training set is empty")
    if not val:
        raise EmptySplitError("validation set is empty")
    if init_model is None:
        feat_dim = train[0].x.shape[0]
        num_classes = train[0].target.class_onehot.shape[0]
        init_model = ToyModel.initialize(
            feat_dim, num_classes, derive_stream(seed, 0)
        )

    model = init_model
    state: Optional[AdamState] = None
    stopper = EarlyStopper(config.patience)
    records: list[EpochRecord] = []
    best_model = model
    stopped_early = False

    for epoch in range(1, config.epochs + 1):
        batch_totals = []
        for start in range(0, len(train), config.batch_size):
            batch = train[start : start + config.batch_size]
            batch_totals.append(batch_loss(model, batch).total)
            model, state = optimizer_step(model, grad(model, batch), state, config)
        train_loss = float(np.mean(batch_totals))
        val_loss = batch_loss(model, val).total
        records.append(EpochRecord(epoch, train_loss, val_loss))
        improved = val_loss < stopper.best_loss
        keep_going = stopper.update(epoch, val_loss)
        if improved:
            best_model = model
        if not keep_going:
            stopped_early = True
            break

    history = TrainHistory(
        epochs=tuple(records),
        best_epoch=stopper.best_epoch,
        stopped_early=stopped_early,
    )
    return best_model, history


def make_toy_data(
    n: int, feat_dim: int, num_classes: int, rng: RngStream
) -> list[TrainSample]:
    """Draw samples from a hidden linear model so the head can actually fit.

    Features are standard normal; a hidden random linear map produces the
    objectness flag (sign of its first output), the class (argmax of the
    class block), and a box in (0, 1) (sigmoid of the box block).
    """
    out_dim = 1 + num_classes + 4
    hidden_w = rng.normals((out_dim, feat_dim))
    hidden_b = rng.normals((out_dim,)) * 0.1
    xs = rng.normals((n, feat_dim))
    z = xs @ hidden_w.T + hidden_b
    samples = []
    for i in range(n):
        obj = int(z[i, 0] > 0.0)
        class_id = int(np.argmax(z[i, 1 : 1 + num_classes]))
        onehot = np.zeros(num_classes)
        onehot[class_id] = 1.0
        box = 1.0 / (1.0 + np.exp(-z[i, 1 + num_classes :]))
        samples.append(
            TrainSample(x=xs[i], target=Target(obj=obj, class_onehot=onehot, box=box))
        )
    return samples


def render_history_csv(history: TrainHistory) -> str:
    """TrainHistory as CSV: epoch, train_loss, val_loss."""
    lines = ["epoch,train_loss,val_loss"]
    for rec in history.epochs:
        lines.append(f"{rec.epoch},{rec.train_loss:.4f},{rec.val_loss:.4f}")
    return "\n".join(lines) + "\n"
