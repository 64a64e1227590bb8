"""Flat ``key = value`` run configuration for the command line.

Lines starting with ``#`` are comments. Every key must be known; values are
coerced to the type of the default. Flags given on the command line win
over the file.
"""

import logging
from dataclasses import dataclass, fields, replace

from .ensemble import MODES, EnsembleConfig
from .errors import ConfigError
from .world import WorldConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    # world
    rows: int = 32
    cols: int = 32
    regions: int = 4
    timesteps: int = 200
    seed: int = 42
    patch_size: int = 9
    # training
    train_frac: float = 0.6
    val_frac: float = 0.2
    window: int = 8
    hidden: int = 16
    rf_radius: float = 1.5
    ensemble: str = "stacking"
    ablations: bool = True
    oversample: bool = True
    forecaster_epochs: int = 200
    detector_epochs: int = 30
    meta_epochs: int = 20
    meta_lr: float = 0.01
    # paths
    data: str = ""
    bundle: str = ""
    out: str = "."
    # command specific
    threshold: float = 0.5
    t: int = -1
    tile: str = ""
    source_region: int = 0
    target_region: int = 1
    transfer_epochs: int = 3
    transfer_lr: float = 0.002
    plots: bool = True

    def __post_init__(self):
        if self.ensemble not in MODES:
            raise ConfigError(f"ensemble must be one of {MODES}, got {self.ensemble!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")

    def world(self):
        return WorldConfig(rows=self.rows, cols=self.cols, regions=self.regions,
                           timesteps=self.timesteps, seed=self.seed, patch_size=self.patch_size)

    def ensemble_config(self):
        base = EnsembleConfig()
        return replace(
            base, train_frac=self.train_frac, val_frac=self.val_frac, window=self.window,
            hidden=self.hidden, rf_radius=self.rf_radius, mode=self.ensemble,
            ablations=self.ablations, seed=self.seed,
            forecaster=base.forecaster.with_(epochs=self.forecaster_epochs),
            detector=base.detector.with_(epochs=self.detector_epochs),
            meta=base.meta.with_(epochs=self.meta_epochs, lr=self.meta_lr, oversample=self.oversample))

    def lines(self):
        return [f"{f.name} = {getattr(self, f.name)}" for f in fields(self)]


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name, raw, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot read {raw!r} as {kind.__name__}") from exc


def parse_config(text, source="<config>"):
    """Parse ``key = value`` text into a dict of typed overrides."""
    kinds = {f.name: type(f.default) for f in fields(RunConfig)}
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, value, kinds[key])
    return out


def resolve(path=None, **overrides):
    """File values first, then non-None overrides; logs the resolved config."""
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config(fh.read(), path))
    kinds = {f.name for f in fields(RunConfig)}
    for key, value in overrides.items():
        if key not in kinds:
            raise ConfigError(f"unknown key {key!r}")
        if value is not None:
            values[key] = value
    try:
        config = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    for line in config.lines():
        log.info("config %s", line)
    return config
