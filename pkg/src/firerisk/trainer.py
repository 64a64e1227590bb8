"""Mini-batch training with early stopping and random minority oversampling.

``fit`` works with any model exposing::

    parameters()            -> list[Parameter]
    loss_grad(x, y, rng)    -> float, accumulating gradients (training mode)
    loss(x, y)              -> float (inference mode)
    scores(x)               -> probabilities, only needed when ``binary`` is true
"""

import copy
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, ConfigError
from .metrics import auc_roc
from .numerics import balanced_bce_loss, sgd_step
from .rng import Rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 0.05
    momentum: float = 0.9
    l2: float = 1e-4
    dropout: float = 0.5
    batch_size: int = 32
    early_stop_patience: int = 1
    early_stopping: bool = True
    oversample: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.early_stop_patience < 0:
            raise ConfigError("early_stop_patience must be non-negative")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_auc: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def __len__(self):
        return len(self.val_loss)

    def to_csv(self):
        out = io.StringIO()
        out.write("epoch,train_loss,val_loss,val_auc\n")
        for i, (a, b, c) in enumerate(zip(self.train_loss, self.val_loss, self.val_auc), start=1):
            auc = "" if c is None or np.isnan(c) else repr(float(c))
            out.write(f"{i},{a!r},{b!r},{auc}\n")
        return out.getvalue()


def oversample(x, y, rng):
    """Duplicate minority-class rows (with replacement) until both classes are equal in size.

    The majority class is kept as is; the result is shuffled with ``rng``.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if len(x) != len(y):
        raise ArgumentError("features and labels differ in length")
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ArgumentError("oversampling needs both classes present")
    minority, majority = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    extra = minority[rng.choice(len(minority), len(majority) - len(minority))] \
        if len(majority) > len(minority) else np.array([], dtype=np.int64)
    idx = np.concatenate([majority, minority, extra])
    idx = idx[rng.permutation(len(idx))]
    return x[idx], y[idx]


def _snapshot(model):
    return [p.value.copy() for p in model.parameters()]


def _restore(model, snap):
    for p, v in zip(model.parameters(), snap):
        p.value[...] = v


def run_epoch(model, x, y, config, rng):
    """One shuffled pass of mini-batch SGD; returns the mean batch loss."""
    if config.oversample:
        x, y = oversample(x, y, rng)
    order = rng.permutation(len(x))
    params = model.parameters()
    losses = []
    for start in range(0, len(order), config.batch_size):
        idx = order[start:start + config.batch_size]
        losses.append(model.loss_grad(x[idx], y[idx], rng))
        if config.lr > 0:
            sgd_step(params, config.lr, config.momentum, config.l2)
        else:
            for p in params:
                p.zero_grad()
    return float(np.mean(losses))


def epoch_loss(model, x, y, config, binary):
    """Loss recorded in the history: class-balanced BCE when training oversamples, else the model loss."""
    if binary and config.oversample:
        return balanced_bce_loss(model.scores(x), y)
    return model.loss(x, y)


def fit(model, train, val, config, binary=False, rng=None, name="model"):
    """Train ``model`` in place and return (model restored to its best epoch, history).

    Training stops once validation loss has failed to improve for
    ``early_stop_patience + 1`` consecutive epochs. With oversampling on, the
    recorded losses are class-balanced so they measure the objective being fit.
    """
    x_tr, y_tr = train
    x_va, y_va = val
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ArgumentError(f"{name}: empty training or validation set")
    rng = Rng(config.seed) if rng is None else rng
    history = TrainHistory()
    best_loss = np.inf
    best = _snapshot(model)
    stale = 0
    for epoch in range(1, config.epochs + 1):
        run_epoch(model, x_tr, y_tr, config, rng)
        tr_loss = epoch_loss(model, x_tr, y_tr, config, binary)
        va_loss = epoch_loss(model, x_va, y_va, config, binary)
        va_auc = float("nan")
        if binary and 0 < np.sum(y_va) < len(y_va):
            va_auc = auc_roc(model.scores(x_va), y_va)
        history.train_loss.append(tr_loss)
        history.val_loss.append(va_loss)
        history.val_auc.append(va_auc)
        history.stopped_epoch = epoch
        log.debug("%s epoch %d train %.5f val %.5f auc %.4f", name, epoch, tr_loss, va_loss, va_auc)
        if va_loss < best_loss:
            best_loss, best, stale = va_loss, _snapshot(model), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if config.early_stopping and stale >= config.early_stop_patience + 1:
                break
    _restore(model, best)
    return model, history


def clone(model):
    return copy.deepcopy(model)


def overfit_onset(history, run=3, max_epoch=None):
    """First 1-based epoch e after which validation loss rises ``run`` epochs in a row
    while training loss falls; None when the history shows no such stretch."""
    tr = np.asarray(history.train_loss)
    va = np.asarray(history.val_loss)
    last = len(va) - run if max_epoch is None else min(len(va) - run, max_epoch)
    for e in range(1, last + 1):
        i = e - 1
        if all(va[i + j] > va[i + j - 1] and tr[i + j] < tr[i + j - 1] for j in range(1, run + 1)):
            return e
    return None
