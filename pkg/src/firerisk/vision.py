"""Small CNN scoring an activity image patch.

conv(8, 3×3) - relu - maxpool(2) - conv(16, 3×3) - relu - gap - dense(1) - sigmoid

Both convolutions use zero padding 1 so a 9×9 patch keeps enough spatial
extent after pooling for the second convolution to see structure.
"""

import numpy as np

from .errors import DimensionError, TrainingError
from .metrics import auc_roc
from .numerics import (Conv2D, Dense, GlobalAvgPool, MaxPool2, ReLU, Sigmoid, bce_loss)
from .rng import Rng
from .trainer import TrainConfig, fit

ARCHITECTURE = "conv(8,3×3)-relu-maxpool(2)-conv(16,3×3)-relu-gap-dense(1)-sigmoid"
DETECTOR_TRAINING = TrainConfig(epochs=30, lr=0.05, momentum=0.9, l2=1e-4, batch_size=32,
                                early_stop_patience=3, dropout=0.0)
HELDOUT_FRACTION = 0.2


class CnnDetector:
    def __init__(self, patch_size=9, rng=None):
        self.patch_size = patch_size
        self.conv1 = Conv2D("conv1", 1, 8, 3, pad=1, rng=rng)
        self.relu1 = ReLU()
        self.pool = MaxPool2()
        self.conv2 = Conv2D("conv2", 8, 16, 3, pad=1, rng=rng)
        self.relu2 = ReLU()
        self.gap = GlobalAvgPool()
        self.dense = Dense("dense", 16, 1, rng=rng)
        self.out = Sigmoid()
        self.layers = [self.conv1, self.relu1, self.pool, self.conv2, self.relu2, self.gap,
                       self.dense, self.out]

    @classmethod
    def zeros(cls, patch_size=9):
        return cls(patch_size, rng=None)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def conv_parameters(self):
        return self.conv1.parameters() + self.conv2.parameters()

    def head_parameters(self):
        return self.dense.parameters()

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2:] != (self.patch_size, self.patch_size):
            raise DimensionError(
                f"expected 1×{self.patch_size}×{self.patch_size} patches, got {x.shape[1:]}")
        return x

    def forward(self, x):
        x = self._check(x)
        for layer in self.layers:
            x = layer.forward(x)
        return x[:, 0]

    def backward(self, grad):
        g = np.asarray(grad, dtype=np.float64)[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def scores(self, x):
        return self.forward(x)

    def loss_grad(self, x, y, rng=None):
        p = self.forward(x)
        # sigmoid + BCE: d loss / d logit = (p - y) / n, skipping the sigmoid backward
        g = (p - y) / len(y)
        g = g[:, None]
        for layer in reversed(self.layers[:-1]):
            g = layer.backward(g)
        return bce_loss(p, y)

    def loss(self, x, y):
        return bce_loss(self.forward(x), y)


def detect_activity(patch, params):
    """Activity score in [0, 1] for one 1×p×p patch (or a batch of them)."""
    x = np.asarray(patch, dtype=np.float64)
    out = params.forward(x)
    return float(out[0]) if x.ndim == 3 else out


def detector_tile_split(rows, cols, seed, tiles=None):
    """Deterministic held-out tile selection: (train tile ids, held-out tile ids), row-major ids."""
    ids = np.arange(rows * cols) if tiles is None else np.asarray(tiles)
    order = ids[Rng(seed ^ 0xD7EC7000).permutation(len(ids))]
    n_held = max(1, int(round(HELDOUT_FRACTION * len(ids))))
    return np.sort(order[n_held:]), np.sort(order[:n_held])


def detector_data(ds, tile_ids, labels=None):
    p = ds.config.patch_size
    x = ds.patches.reshape(-1, 1, p, p)[tile_ids]
    y = (ds.activity.ravel() if labels is None else np.asarray(labels))[tile_ids].astype(np.float64)
    return x, y


def train_detector(ds, config=DETECTOR_TRAINING, tiles=None, labels=None, init=None):
    """Fit the detector on the generator's activity flags; returns (detector, history, held-out ids).

    ``tiles`` restricts training to a subset of row-major tile ids;
    ``labels`` overrides the per-tile activity flags (used for null-model checks).
    """
    cfg = ds.config
    train_ids, held_ids = detector_tile_split(cfg.rows, cfg.cols, config.seed, tiles)
    x_tr, y_tr = detector_data(ds, train_ids, labels)
    x_va, y_va = detector_data(ds, held_ids, labels)
    if y_tr.min() == y_tr.max():
        raise TrainingError("detector training set contains a single class")
    rng = Rng(config.seed ^ 0xC0117000)
    model = init if init is not None else CnnDetector(cfg.patch_size, rng=rng.spawn())
    model, history = fit(model, (x_tr, y_tr), (x_va, y_va), config, binary=True,
                         rng=rng.spawn(), name="detector")
    return model, history, held_ids


def heldout_auc(ds, detector, held_ids, labels=None):
    x, y = detector_data(ds, held_ids, labels)
    return auc_roc(detector.scores(x), y)
