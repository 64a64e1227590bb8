"""Per-region LSTM forecasters for the next weather vector.

Gate equations (z = [x; h_prev]):

    i = sigmoid(W_i z + b_i)    f = sigmoid(W_f z + b_f)
    o = sigmoid(W_o z + b_o)    g = tanh(W_g z + b_g)
    c = f * c_prev + i * g      h = o * tanh(c)

The forecast is ``W_y h_L + b_y`` after unrolling over the window from a
zero state. Inputs and targets are z-normalised per region with statistics
from the training split; ``forecast`` works in physical units.
"""

import logging

import numpy as np

from .errors import ArgumentError, DimensionError, StateError, TrainingError
from .numerics import Parameter, mse_loss, sigmoid
from .rng import Rng
from .trainer import TrainConfig, fit

log = logging.getLogger(__name__)

GATES = ("i", "f", "o", "g")
DEFAULT_WINDOW = 8
DEFAULT_HIDDEN = 16
# ~110 windows per region: long patience, otherwise the first plateau stops training
FORECASTER_TRAINING = TrainConfig(epochs=200, lr=0.05, momentum=0.9, l2=1e-4, batch_size=16,
                                  early_stop_patience=20, dropout=0.0)


def _gate_names():
    return [f"gate_{g}.weight" for g in GATES] + [f"gate_{g}.bias" for g in GATES]


def lstm_cell_step(x, h_prev, c_prev, params):
    """Batched cell step; returns (h, c, cache)."""
    z = np.concatenate([x, h_prev], axis=-1)
    width = params["gate_i.weight"].value.shape[1]
    if z.shape[-1] != width:
        raise DimensionError(f"cell expects input+hidden width {width}, got {z.shape[-1]}")
    pre = {g: z @ params[f"gate_{g}.weight"].value.T + params[f"gate_{g}.bias"].value for g in GATES}
    i, f, o = sigmoid(pre["i"]), sigmoid(pre["f"]), sigmoid(pre["o"])
    g = np.tanh(pre["g"])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (z, c_prev, i, f, o, g, tc)


def lstm_cell_backward(cache, dh, dc, params):
    """Accumulate gate gradients; return (dx, dh_prev, dc_prev)."""
    z, c_prev, i, f, o, g, tc = cache
    dc_total = dc + dh * o * (1.0 - tc * tc)
    da = {
        "i": dc_total * g * i * (1.0 - i),
        "f": dc_total * c_prev * f * (1.0 - f),
        "o": dh * tc * o * (1.0 - o),
        "g": dc_total * i * (1.0 - g * g),
    }
    dz = np.zeros_like(z)
    for name, d in da.items():
        w = params[f"gate_{name}.weight"]
        w.grad += d.T @ z
        params[f"gate_{name}.bias"].grad += d.sum(axis=0)
        dz += d @ w.value
    n_in = z.shape[-1] - dh.shape[-1]
    return dz[..., :n_in], dz[..., n_in:], dc_total * f


def lstm_cell_forward(x, h_prev, c_prev, params):
    """Single (unbatched or batched) cell step returning (h, c)."""
    x, h_prev, c_prev = (np.asarray(a, dtype=np.float64) for a in (x, h_prev, c_prev))
    single = x.ndim == 1
    if single:
        x, h_prev, c_prev = x[None], h_prev[None], c_prev[None]
    h, c, _ = lstm_cell_step(x, h_prev, c_prev, params)
    return (h[0], c[0]) if single else (h, c)


class LstmForecaster:
    def __init__(self, n_in=4, hidden=DEFAULT_HIDDEN, rng=None):
        self.n_in = n_in
        self.hidden = hidden
        self.mean = np.zeros(n_in)
        self.std = np.ones(n_in)
        width = n_in + hidden
        self.params = {}
        scale = 1.0 / np.sqrt(width)
        for g in GATES:
            w = rng.uniform(-scale, scale, size=(hidden, width)) if rng is not None \
                else np.zeros((hidden, width))
            self.params[f"gate_{g}.weight"] = Parameter(f"gate_{g}.weight", w)
        for g in GATES:
            b = np.full(hidden, 1.0 if (g == "f" and rng is not None) else 0.0)
            self.params[f"gate_{g}.bias"] = Parameter(f"gate_{g}.bias", b)
        w = rng.uniform(-scale, scale, size=(n_in, hidden)) if rng is not None else np.zeros((n_in, hidden))
        self.params["proj.weight"] = Parameter("proj.weight", w)
        self.params["proj.bias"] = Parameter("proj.bias", np.zeros(n_in))
        self._caches = None

    @classmethod
    def zeros(cls, n_in=4, hidden=DEFAULT_HIDDEN):
        return cls(n_in, hidden, rng=None)

    def parameters(self):
        return list(self.params.values())

    def gate_parameters(self):
        return [self.params[n] for n in _gate_names()]

    def head_parameters(self):
        return [self.params["proj.weight"], self.params["proj.bias"]]

    # ---- normalised-space model

    def _forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise DimensionError(f"windows must be (batch, L, {self.n_in}), got {x.shape}")
        if x.shape[1] == 0:
            raise ArgumentError("empty forecast window")
        B = x.shape[0]
        h = np.zeros((B, self.hidden))
        c = np.zeros((B, self.hidden))
        caches = []
        for step in range(x.shape[1]):
            h, c, cache = lstm_cell_step(x[:, step], h, c, self.params)
            caches.append(cache)
        self._caches = (caches, h)
        return h @ self.params["proj.weight"].value.T + self.params["proj.bias"].value

    def _backward(self, grad):
        if self._caches is None:
            raise StateError("backward called before forward")
        caches, h_last = self._caches
        pw = self.params["proj.weight"]
        pw.grad += grad.T @ h_last
        self.params["proj.bias"].grad += grad.sum(axis=0)
        dh = grad @ pw.value
        dc = np.zeros_like(dh)
        dxs = []
        for cache in reversed(caches):
            dx, dh, dc = lstm_cell_backward(cache, dh, dc, self.params)
            dxs.append(dx)
        self._caches = None
        return np.stack(dxs[::-1], axis=1)

    def predict_normalized(self, x):
        out = self._forward(x)
        self._caches = None
        return out

    def loss_grad(self, x, y, rng=None):
        pred = self._forward(x)
        diff = pred - y
        self._backward(2.0 * diff / diff.size)
        return float(np.mean(diff * diff))

    def loss(self, x, y):
        return mse_loss(self.predict_normalized(x), y)

    # ---- physical units

    def normalize(self, w):
        return (np.asarray(w, dtype=np.float64) - self.mean) / self.std

    def forecast(self, window):
        """Next weather vector after ``window`` (L×P, or batch×L×P), in physical units."""
        w = np.asarray(window, dtype=np.float64)
        single = w.ndim == 2
        if single:
            w = w[None]
        if w.ndim != 3 or w.shape[1] == 0:
            raise ArgumentError(f"forecast needs a non-empty window, got shape {np.shape(window)}")
        out = self.predict_normalized(self.normalize(w)) * self.std + self.mean
        return out[0] if single else out


def forecast(window, params):
    return params.forecast(window)


def windows_for(series, targets, window):
    """Stack (series[t-L:t], series[t]) pairs for every target time t."""
    targets = np.asarray(targets)
    idx = targets[:, None] - window + np.arange(window)[None, :]
    return series[idx], series[targets]


def region_training_data(ds, region, split, window):
    series = ds.region_series(region)
    stats = series[split.train]
    mean = stats.mean(axis=0)
    std = np.maximum(stats.std(axis=0), 1e-6)
    z = (series - mean) / std
    train_t = split.train[split.train >= window]
    if len(train_t) == 0:
        raise TrainingError(f"region {region}: no training targets after a {window}-step window")
    return z, mean, std, windows_for(z, train_t, window), windows_for(z, split.val, window)


def train_forecaster(series_data, config, rng, hidden=DEFAULT_HIDDEN, name="forecaster"):
    z, mean, std, train, val = series_data
    model = LstmForecaster(z.shape[1], hidden, rng=rng.spawn())
    model.mean, model.std = mean, std
    return fit(model, train, val, config, rng=rng.spawn(), name=name)


def train_region_forecasters(ds, split, config=FORECASTER_TRAINING, window=DEFAULT_WINDOW,
                             hidden=DEFAULT_HIDDEN, regions=None):
    """One forecaster per region; returns ({region: forecaster}, {region: history})."""
    regions = range(ds.config.regions) if regions is None else regions
    root = Rng(config.seed)
    forecasters, histories = {}, {}
    for region in regions:
        # each region gets its own stream so results do not depend on which regions are trained
        rng = Rng(root.seed ^ (0x5EA50000 + int(region)))
        data = region_training_data(ds, region, split, window)
        model, hist = train_forecaster(data, config, rng, hidden, name=f"forecaster[{region}]")
        log.info("region %d forecaster: best epoch %d, val mse %.4f", region, hist.best_epoch,
                 hist.val_loss[hist.best_epoch - 1] if hist.best_epoch else float("nan"))
        forecasters[int(region)] = model
        histories[int(region)] = hist
    return forecasters, histories


def persistence_mse(z, targets):
    """MSE of predicting the previous value, in normalised units."""
    targets = np.asarray(targets)
    return mse_loss(z[targets - 1], z[targets])
