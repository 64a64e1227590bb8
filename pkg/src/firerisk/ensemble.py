"""Stacked ensemble: component outputs -> feed-forward meta-learner -> fire probability.

Feature vector for (tile, t), using only data from before t:

    [forecast temperature, humidity, wind, precipitation at t,
     activity score, rf density at t-1, infrastructure proximity, dryness at t-1]

Stages run in order: region forecasters, activity detector, then the meta
learner on stacked features. Single-source ablation metas are trained on
column subsets and double as the members of the ``averaging`` combiner.
"""

import copy
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, ConfigError, DimensionError, StateError
from .ground import proximity, rf_density
from .metrics import evaluate_scores
from .numerics import Dense, Dropout, ReLU, Sigmoid, balanced_bce_loss, bce_loss
from .rng import Rng
from .trainer import TrainConfig, fit
from .vision import DETECTOR_TRAINING, train_detector
from .weather import (DEFAULT_HIDDEN, DEFAULT_WINDOW, FORECASTER_TRAINING, region_training_data,
                      train_forecaster, train_region_forecasters, windows_for)
from .world import split_dataset

log = logging.getLogger(__name__)

FEATURES = ("fc_temperature", "fc_humidity", "fc_wind", "fc_precipitation",
            "activity_score", "rf_density", "infra_proximity", "dryness")
N_FEATURES = len(FEATURES)
SOURCES = {
    "weather": (0, 1, 2, 3, 7),
    "vision": (4,),
    "ground": (5, 6),
}
MODES = ("stacking", "averaging")
META_HIDDEN = 16
META_TRAINING = TrainConfig(epochs=20, lr=0.01, momentum=0.9, l2=1e-4, dropout=0.5, batch_size=32,
                            early_stop_patience=1, oversample=True)


class MetaNet:
    """dense(F->16) - relu - dropout - dense(16->1) - sigmoid on standardised features."""

    def __init__(self, columns=tuple(range(N_FEATURES)), hidden=META_HIDDEN, dropout=0.5, rng=None):
        self.columns = tuple(int(c) for c in columns)
        n_in = len(self.columns)
        self.feature_mean = np.zeros(n_in)
        self.feature_std = np.ones(n_in)
        self.dense1 = Dense("dense1", n_in, hidden, rng=rng)
        self.relu = ReLU()
        self.drop = Dropout(dropout)
        self.dense2 = Dense("dense2", hidden, 1, rng=rng)
        self.out = Sigmoid()

    @classmethod
    def zeros(cls, columns=tuple(range(N_FEATURES)), hidden=META_HIDDEN, dropout=0.5):
        return cls(columns, hidden, dropout, rng=None)

    @property
    def dropout(self):
        return self.drop.rate

    def parameters(self):
        return self.dense1.parameters() + self.dense2.parameters()

    def set_scaling(self, features):
        x = np.asarray(features)[:, self.columns]
        self.feature_mean = x.mean(axis=0)
        self.feature_std = np.maximum(x.std(axis=0), 1e-6)

    def _prepare(self, features):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            x = x[None]
        if x.shape[-1] != N_FEATURES:
            raise DimensionError(f"meta expects {N_FEATURES} stacked features, got {x.shape[-1]}")
        return (x[:, self.columns] - self.feature_mean) / self.feature_std

    def forward(self, features, rng=None, training=False):
        x = self._prepare(features)
        h = self.relu.forward(self.dense1.forward(x))
        h = self.drop.forward(h, rng, training)
        return self.out.forward(self.dense2.forward(h))[:, 0]

    def _backward_logit(self, g):
        g = self.dense2.backward(g[:, None])
        g = self.drop.backward(g)
        g = self.relu.backward(g)
        return self.dense1.backward(g)

    def loss_grad(self, x, y, rng=None):
        p = self.forward(x, rng, training=True)
        self._backward_logit((p - y) / len(y))
        return bce_loss(p, y)

    def loss(self, x, y):
        return bce_loss(self.scores(x), y)

    def scores(self, x):
        return self.forward(x, training=False)


def meta_forward(features, meta, rng=None, training=False):
    p = meta.forward(features, rng, training)
    return float(p[0]) if np.ndim(features) == 1 else p


@dataclass(frozen=True)
class EnsembleConfig:
    train_frac: float = 0.6
    val_frac: float = 0.2
    window: int = DEFAULT_WINDOW
    hidden: int = DEFAULT_HIDDEN
    rf_radius: float = 1.5
    mode: str = "stacking"
    ablations: bool = True
    seed: int = 0
    forecaster: TrainConfig = FORECASTER_TRAINING
    detector: TrainConfig = DETECTOR_TRAINING
    meta: TrainConfig = META_TRAINING

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown ensemble mode {self.mode!r}; choose from {MODES}")
        if self.window < 1:
            raise ConfigError("window must be at least 1")
        if self.rf_radius <= 0:
            raise ConfigError("rf_radius must be positive")

    def seeded(self):
        """Stage configs carrying seeds derived from the top-level seed."""
        s = self.seed
        return (self.forecaster.with_(seed=s * 3 + 1), self.detector.with_(seed=s * 3 + 2),
                self.meta.with_(seed=s * 3 + 3))

    def with_epochs(self, k):
        return replace(self, forecaster=self.forecaster.with_(epochs=k),
                       detector=self.detector.with_(epochs=k), meta=self.meta.with_(epochs=k))


@dataclass(eq=False)
class EnsembleBundle:
    forecasters: dict
    detector: object
    meta: object
    fingerprint: str
    window: int = DEFAULT_WINDOW
    rf_radius: float = 1.5
    mode: str = "stacking"
    ablations: dict = field(default_factory=dict)

    def check_complete(self):
        if not self.forecasters or self.detector is None or self.meta is None:
            raise StateError("bundle is missing a component (forecasters, detector or meta)")
        if self.mode == "averaging" and set(self.ablations) != set(SOURCES):
            raise StateError("averaging mode needs all single-source metas")

    def probabilities(self, features, mode=None):
        mode = self.mode if mode is None else mode
        if mode == "averaging":
            return np.mean([m.scores(features) for m in self.ablations.values()], axis=0)
        return self.meta.scores(features)

    def copy(self):
        return copy.deepcopy(self)


# ---------------------------------------------------------------- stacking

def tile_ids(ds, regions=None):
    """Row-major tile ids, optionally restricted to some regions."""
    rmap = ds.regions.ravel()
    if regions is None:
        return np.arange(rmap.size)
    for r in regions:
        if not 0 <= r < ds.config.regions:
            raise ArgumentError(f"unknown region {r}")
    return np.flatnonzero(np.isin(rmap, list(regions)))


def stack_matrix(ds, bundle, times, tiles=None):
    """Stacked features for every (t, tile) pair, t-major; returns (X, y, t index, tile ids)."""
    if bundle.forecasters is None or bundle.detector is None:
        raise StateError("stacking needs trained forecasters and detector")
    times = np.asarray(times, dtype=np.int64)
    L = bundle.window
    if len(times) and times.min() < L:
        raise ArgumentError(f"time {times.min()} has fewer than {L} steps of history")
    cfg = ds.config
    tiles = np.arange(cfg.rows * cfg.cols) if tiles is None else np.asarray(tiles)
    rmap = ds.regions.ravel()[tiles]

    fc = np.empty((len(times), len(tiles), 4))
    for region in np.unique(rmap):
        if int(region) not in bundle.forecasters:
            raise StateError(f"no forecaster for region {region}")
        series = ds.region_series(int(region))
        win, _ = windows_for(series, times, L)
        fc[:, rmap == region] = bundle.forecasters[int(region)].forecast(win)[:, None, :]

    p = cfg.patch_size
    scores = bundle.detector.scores(ds.patches.reshape(-1, 1, p, p)[tiles])
    rf = rf_density(ds.rf_counts[times - 1], bundle.rf_radius).reshape(len(times), -1)[:, tiles]
    prox = proximity(ds.infra_distance.ravel()[tiles])
    dry = ds.dryness[times - 1].reshape(len(times), -1)[:, tiles]

    nt, nk = len(times), len(tiles)
    X = np.empty((nt, nk, N_FEATURES))
    X[..., 0:4] = fc
    X[..., 4] = scores[None, :]
    X[..., 5] = rf
    X[..., 6] = prox[None, :]
    X[..., 7] = dry
    y = ds.fire.reshape(cfg.timesteps, -1)[times][:, tiles].astype(np.float64)
    t_idx = np.repeat(times, nk)
    k_idx = np.tile(tiles, nt)
    return X.reshape(-1, N_FEATURES), y.ravel(), t_idx, k_idx


def stack_features(tile, t, ds, bundle):
    r, c = tile
    cfg = ds.config
    if not (0 <= r < cfg.rows and 0 <= c < cfg.cols):
        raise ArgumentError(f"tile {tile} outside the grid")
    if not bundle.window <= t < cfg.timesteps:
        raise ArgumentError(f"time {t} needs {bundle.window} steps of history and must be < {cfg.timesteps}")
    X, _, _, _ = stack_matrix(ds, bundle, [t], [r * cfg.cols + c])
    return X[0]


def predict(tile, t, ds, bundle, threshold=0.5):
    """(probability, decision) with the ``probability >= threshold`` convention."""
    prob = float(bundle.probabilities(stack_features(tile, t, ds, bundle)[None])[0])
    return prob, prob >= threshold


def decide(probabilities, threshold=0.5):
    return np.asarray(probabilities) >= threshold


# ---------------------------------------------------------------- training

def _usable(times, window):
    times = np.asarray(times)
    return times[times >= window]


def split_features(ds, bundle, split, tiles=None):
    train = stack_matrix(ds, bundle, _usable(split.train, bundle.window), tiles)
    val = stack_matrix(ds, bundle, _usable(split.val, bundle.window), tiles)
    return train, val


def fit_meta(train, val, config, columns=tuple(range(N_FEATURES)), init=None, name="meta"):
    x_tr, y_tr = train
    rng = Rng(config.seed ^ (0x3E7A0000 + len(columns) * 131 + sum(columns)))
    if init is None:
        model = MetaNet(columns, META_HIDDEN, config.dropout, rng=rng.spawn())
        model.set_scaling(x_tr)
    else:
        model = init
        rng.spawn()
    return fit(model, train, val, config, binary=True, rng=rng.spawn(), name=name)


def train_components(ds, config, split, regions=None, forecaster_regions=None):
    f_cfg, d_cfg, _ = config.seeded()
    forecasters, f_hist = train_region_forecasters(ds, split, f_cfg, config.window, config.hidden,
                                                   regions=forecaster_regions)
    tiles = None if regions is None else tile_ids(ds, regions)
    detector, d_hist, _ = train_detector(ds, d_cfg, tiles=tiles)
    histories = {f"forecaster[{r}]": h for r, h in f_hist.items()}
    histories["detector"] = d_hist
    bundle = EnsembleBundle(forecasters=forecasters, detector=detector, meta=None,
                            fingerprint=ds.config.fingerprint(), window=config.window,
                            rf_radius=config.rf_radius, mode=config.mode)
    return bundle, histories


def train_meta(ds, bundle, config, split, regions=None):
    """Fit the meta learner (and single-source metas) on top of trained components."""
    if not bundle.forecasters or bundle.detector is None:
        raise StateError("meta training requires trained forecasters and detector first")
    _, _, m_cfg = config.seeded()
    tiles = None if regions is None else tile_ids(ds, regions)
    (x_tr, y_tr, _, _), (x_va, y_va, _, _) = split_features(ds, bundle, split, tiles)
    histories = {}
    bundle.meta, histories["meta"] = fit_meta((x_tr, y_tr), (x_va, y_va), m_cfg)
    if config.ablations or config.mode == "averaging":
        for name, cols in SOURCES.items():
            bundle.ablations[name], histories[f"meta_{name}"] = fit_meta(
                (x_tr, y_tr), (x_va, y_va), m_cfg, cols, name=f"meta_{name}")
    return bundle, histories


def train_ensemble(ds, config=EnsembleConfig(), regions=None, forecaster_regions=None):
    """Train every stage in order; returns (bundle, {stage name: history}).

    ``regions`` restricts detector and meta training to those regions' tiles.
    """
    split = split_dataset(ds, config.train_frac, config.val_frac)
    bundle, histories = train_components(ds, config, split, regions, forecaster_regions)
    bundle, meta_hist = train_meta(ds, bundle, config, split, regions)
    histories.update(meta_hist)
    bundle.check_complete()
    return bundle, histories


def _loss(p, y, balanced):
    return balanced_bce_loss(p, y) if balanced else bce_loss(p, y)


def evaluate_bundle(ds, bundle, times, tiles=None, threshold=0.5, mode=None, balanced=False):
    """(MetricsReport, loss) over the given times; ``balanced`` selects class-balanced BCE."""
    X, y, _, _ = stack_matrix(ds, bundle, _usable(times, bundle.window), tiles)
    p = bundle.probabilities(X, mode)
    return evaluate_scores(p, y, threshold), _loss(p, y, balanced)


def evaluate_ablation(ds, bundle, times, source, tiles=None, threshold=0.5, balanced=False):
    X, y, _, _ = stack_matrix(ds, bundle, _usable(times, bundle.window), tiles)
    p = bundle.ablations[source].scores(X)
    return evaluate_scores(p, y, threshold), _loss(p, y, balanced)


# ---------------------------------------------------------------- transfer

FROZEN_DEFAULT = ("detector.conv", "lstm.gates")


@dataclass(frozen=True)
class TransferPlan:
    source: int
    target: int
    epochs: int = 3
    lr: float = 0.002
    frozen: tuple = FROZEN_DEFAULT

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("fine-tune epochs must be non-negative")
        if self.lr <= 0:
            raise ConfigError("fine-tune lr must be positive")
        unknown = set(self.frozen) - set(FROZEN_DEFAULT)
        if unknown:
            raise ConfigError(f"unknown frozen groups {sorted(unknown)}")


def frozen_parameters(bundle, plan):
    params = []
    if "detector.conv" in plan.frozen:
        params += bundle.detector.conv_parameters()
    if "lstm.gates" in plan.frozen:
        params += bundle.forecasters[plan.target].gate_parameters()
    return params


def _check_regions(ds, plan, bundle=None):
    n = ds.config.regions
    for r in (plan.source, plan.target):
        if not 0 <= r < n:
            raise ArgumentError(f"unknown region {r} (world has {n})")
    if bundle is not None and plan.target not in bundle.forecasters:
        raise ArgumentError(f"bundle has no forecaster for region {plan.target}")


def transfer(bundle, target_ds, plan, config=EnsembleConfig()):
    """Copy ``bundle`` and fine-tune its heads on the target region for ``plan.epochs`` epochs.

    Frozen: detector convolutions and the target forecaster's gate weights.
    Tuned: target forecaster projection, detector dense head, meta learner(s).
    Returns (adapted bundle, {stage: history}).
    """
    _check_regions(target_ds, plan, bundle)
    adapted = bundle.copy()
    adapted.fingerprint = target_ds.config.fingerprint()
    if plan.epochs == 0:
        return adapted, {}

    frozen = frozen_parameters(adapted, plan)
    for p in frozen:
        p.frozen = True
    split = split_dataset(target_ds, config.train_frac, config.val_frac)
    f_cfg, d_cfg, m_cfg = config.seeded()
    tune = dict(epochs=plan.epochs, lr=plan.lr, early_stopping=False)
    histories = {}
    try:
        fc = adapted.forecasters[plan.target]
        _, mean, std, train, val = region_training_data(target_ds, plan.target, split, adapted.window)
        fc.mean, fc.std = mean, std
        _, histories[f"forecaster[{plan.target}]"] = fit(
            fc, train, val, f_cfg.with_(**tune), rng=Rng(f_cfg.seed ^ 0x7A5F0001), name="forecaster")

        tiles = tile_ids(target_ds, [plan.target])
        adapted.detector, histories["detector"], _ = train_detector(
            target_ds, d_cfg.with_(**tune), tiles=tiles, init=adapted.detector)

        (x_tr, y_tr, _, _), (x_va, y_va, _, _) = split_features(target_ds, adapted, split, tiles)
        adapted.meta, histories["meta"] = fit_meta(
            (x_tr, y_tr), (x_va, y_va), m_cfg.with_(**tune), init=adapted.meta)
        for name in list(adapted.ablations):
            adapted.ablations[name], histories[f"meta_{name}"] = fit_meta(
                (x_tr, y_tr), (x_va, y_va), m_cfg.with_(**tune), init=adapted.ablations[name],
                name=f"meta_{name}")
    finally:
        for p in frozen:
            p.frozen = False
    return adapted, histories


def scratch_baseline(target_ds, plan, config=EnsembleConfig()):
    """Fresh models trained on the target region only, for the same epoch budget as ``plan``."""
    _check_regions(target_ds, plan)
    cfg = config.with_epochs(plan.epochs)
    # regular stage learning rates; only the epoch budget is shared with the fine-tune
    cfg = replace(cfg, meta=cfg.meta.with_(early_stopping=False),
                  detector=cfg.detector.with_(early_stopping=False),
                  forecaster=cfg.forecaster.with_(early_stopping=False),
                  ablations=False, mode="stacking")
    return train_ensemble(target_ds, cfg, regions=[plan.target], forecaster_regions=[plan.target])


def region_val_loss(ds, bundle, region, config=EnsembleConfig()):
    """Meta validation loss on one region, measured the way ``fit`` measures it."""
    split = split_dataset(ds, config.train_frac, config.val_frac)
    _, loss = evaluate_bundle(ds, bundle, split.val, tile_ids(ds, [region]), mode="stacking",
                              balanced=config.meta.oversample)
    return loss
