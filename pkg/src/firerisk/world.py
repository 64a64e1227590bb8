"""Deterministic synthetic world with a logistic ignition oracle.

The grid is split into rectangular region blocks. Each region has its own
weather series (seasonal sinusoid plus AR(1) noise); each tile has a fuel
drying rate, a static activity image patch, Poisson RF event counts and a
distance to the nearest infrastructure cell. Fire labels are Bernoulli draws
from :func:`ignition_probability`. Every number in here is documented in
docs/FORMATS.md.
"""

import hashlib
import io
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .blobs import MAGIC as TENSOR_MAGIC, VERSION as TENSOR_VERSION
from .errors import ArgumentError, ConfigError, FormatError
from .ground import infrastructure_distance, proximity
from .numerics import sigmoid
from .rng import Rng

WEATHER_DIMS = 4
WEATHER_NAMES = ("temperature", "humidity", "wind", "precipitation")

# logit = sum(coef * input) + intercept
IGNITION_COEFFS = {
    "dryness": 3.0,
    "wind": 0.08,
    "activity_density": 1.5,
    "infra_proximity": 1.0,
    "humidity": -0.03,
    "precipitation": -0.4,
    "intercept": -4.0,
}

SEASON_PERIOD = 50
AR_COEFF = 0.8
AR_NOISE_SD = 1.0

DATASET_MAGIC = b"WFDS"
DATASET_VERSION = 1


@dataclass(frozen=True)
class WorldConfig:
    rows: int = 32
    cols: int = 32
    regions: int = 4
    timesteps: int = 200
    seed: int = 42
    patch_size: int = 9

    def __post_init__(self):
        for name in ("rows", "cols", "regions", "timesteps", "patch_size"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.timesteps < 2:
            raise ConfigError("timesteps must be at least 2")
        if self.patch_size % 2 == 0:
            raise ConfigError("patch_size must be odd")
        if self.rows < self.patch_size or self.cols < self.patch_size:
            raise ConfigError("rows and cols must be at least patch_size")
        if self.regions > self.rows * self.cols:
            raise ConfigError("more regions than tiles")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        region_blocks(self.rows, self.cols, self.regions)

    @property
    def weather_dims(self):
        return WEATHER_DIMS

    def fingerprint(self):
        text = (f"rows={self.rows};cols={self.cols};regions={self.regions};"
                f"timesteps={self.timesteps};seed={self.seed};patch_size={self.patch_size}")
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def region_blocks(rows, cols, regions):
    """Block-grid shape (band rows, band cols) for ``regions`` blocks, closest to square."""
    best = None
    for br in range(1, regions + 1):
        if regions % br:
            continue
        bc = regions // br
        if br > rows or bc > cols:
            continue
        score = abs(rows / br - cols / bc)
        if best is None or score < best[0]:
            best = (score, br, bc)
    if best is None:
        raise ConfigError(f"cannot split a {rows}×{cols} grid into {regions} blocks")
    return best[1], best[2]


def region_map(config):
    """rows×cols array of region ids, numbered row-major over the block grid."""
    br, bc = region_blocks(config.rows, config.cols, config.regions)
    band_r = np.arange(config.rows) * br // config.rows
    band_c = np.arange(config.cols) * bc // config.cols
    return band_r[:, None] * bc + band_c[None, :]


@dataclass(frozen=True)
class TileRecord:
    tile: tuple
    t: int
    weather: np.ndarray
    dryness: float
    activity_patch: np.ndarray
    rf_count: int
    infra_distance: float
    fire: int


@dataclass(eq=False)
class WorldDataset:
    config: WorldConfig
    weather: np.ndarray  # (T, rows, cols, 4)
    dryness: np.ndarray  # (T, rows, cols)
    rf_counts: np.ndarray  # (T, rows, cols) int64
    fire: np.ndarray  # (T, rows, cols) uint8
    patches: np.ndarray  # (rows, cols, 1, p, p)
    activity: np.ndarray  # (rows, cols) bool, ground-truth activity flag
    intensity: np.ndarray  # (rows, cols) activity density fed to the oracle
    infra_mask: np.ndarray  # (rows, cols) bool
    infra_distance: np.ndarray  # (rows, cols)
    oracle_params: dict = field(default_factory=lambda: dict(IGNITION_COEFFS))

    @property
    def n_records(self):
        return self.fire.size

    @property
    def regions(self):
        return region_map(self.config)

    def region_tiles(self, region):
        if not 0 <= region < self.config.regions:
            raise ArgumentError(f"unknown region {region}")
        return np.argwhere(self.regions == region)

    def region_series(self, region):
        """(T, 4) weather series of a region, read at its first tile."""
        r, c = self.region_tiles(region)[0]
        return self.weather[:, r, c, :]

    def record(self, tile, t):
        r, c = tile
        return TileRecord(
            tile=(int(r), int(c)), t=int(t),
            weather=self.weather[t, r, c].copy(),
            dryness=float(self.dryness[t, r, c]),
            activity_patch=self.patches[r, c].copy(),
            rf_count=int(self.rf_counts[t, r, c]),
            infra_distance=float(self.infra_distance[r, c]),
            fire=int(self.fire[t, r, c]),
        )

    def records(self):
        """All records in (t, row, col) order."""
        T, rows, cols = self.fire.shape
        for t in range(T):
            for r in range(rows):
                for c in range(cols):
                    yield self.record((r, c), t)

    def oracle_probability(self):
        """Ignition probability for every record, shape (T, rows, cols)."""
        w = self.weather
        return ignition_probability(self.dryness, w[..., 2], w[..., 1], w[..., 3],
                                    self.intensity[None], self.infra_distance[None])

    def equals(self, other):
        names = ("weather", "dryness", "rf_counts", "fire", "patches", "activity",
                 "intensity", "infra_mask", "infra_distance")
        return self.config == other.config and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in names)


def ignition_probability(dryness, wind, humidity, precip, activity_density, infra_distance):
    k = IGNITION_COEFFS
    logit = (k["dryness"] * np.asarray(dryness, dtype=np.float64)
             + k["wind"] * np.asarray(wind, dtype=np.float64)
             + k["activity_density"] * np.asarray(activity_density, dtype=np.float64)
             + k["infra_proximity"] * proximity(infra_distance)
             + k["humidity"] * np.asarray(humidity, dtype=np.float64)
             + k["precipitation"] * np.asarray(precip, dtype=np.float64)
             + k["intercept"])
    p = sigmoid(logit)
    return float(p) if np.ndim(p) == 0 else p


# ---------------------------------------------------------------- generation

def _region_weather(config, rng):
    R, T = config.regions, config.timesteps
    phase = rng.uniform(0.0, SEASON_PERIOD, size=R)
    temp_offset = rng.uniform(-3.0, 3.0, size=R)
    hum_offset = rng.uniform(-8.0, 8.0, size=R)
    shocks = rng.normal(0.0, AR_NOISE_SD, size=(R, T, WEATHER_DIMS))

    t = np.arange(T)
    angle = 2.0 * math.pi * (t[None, :] + phase[:, None]) / SEASON_PERIOD
    base = np.stack([
        24.0 + temp_offset[:, None] + 8.0 * np.sin(angle),
        70.0 + hum_offset[:, None] - 45.0 * np.sin(angle),
        3.0 + 1.5 * np.cos(angle),
        1.5 - 3.0 * np.sin(angle),
    ], axis=-1)

    noise = np.empty_like(shocks)
    noise[:, 0] = shocks[:, 0] / math.sqrt(1.0 - AR_COEFF ** 2)
    for i in range(1, T):
        noise[:, i] = AR_COEFF * noise[:, i - 1] + shocks[:, i]
    w = base + noise
    w[..., 1] = np.clip(w[..., 1], 5.0, 100.0)
    w[..., 2] = np.maximum(w[..., 2], 0.0)
    w[..., 3] = np.maximum(w[..., 3], 0.0)
    return w  # (R, T, 4)


def _dryness(temperature, precip, drying_rate):
    """Integrate temperature-driven drying minus precipitation wetting, clamped to [0, 1]."""
    T = temperature.shape[0]
    d = np.empty_like(temperature)
    level = np.full(temperature.shape[1:], 0.5)
    for t in range(T):
        level = np.clip(level + drying_rate * 0.03 * (temperature[t] - 27.0)
                        - 0.06 * precip[t], 0.0, 1.0)
        d[t] = level
    return d


def _activity_patches(config, rng):
    rows, cols, p = config.rows, config.cols, config.patch_size
    flag_u = rng.random((rows, cols))
    level_u = rng.random((rows, cols))
    background = rng.uniform(0.0, 0.15, size=(rows, cols, p, p))
    shape_u = rng.random((rows, cols, 12))

    active = flag_u < 0.25
    intensity = np.where(active, 0.6 + 0.4 * level_u, 0.0)
    patches = background.copy()
    for r in range(rows):
        for c in range(cols):
            u = shape_u[r, c]
            img = patches[r, c]
            if active[r, c]:
                level = intensity[r, c]
                _draw_road(img, u[0], u[1], u[2], level)
                for b in range(int(u[3] * 3)):  # 0-2 vehicles
                    i = min(int(u[4 + 2 * b] * (p - 1)), p - 2)
                    j = min(int(u[5 + 2 * b] * (p - 1)), p - 2)
                    img[i:i + 2, j:j + 2] = np.maximum(img[i:i + 2, j:j + 2], level)
            elif u[3] < 0.5:
                # isolated bright pixel: clutter without road structure
                i = min(int(u[4] * p), p - 1)
                j = min(int(u[5] * p), p - 1)
                img[i, j] = 0.3 + 0.7 * u[6]
    return patches[:, :, None], active, intensity


def _draw_road(img, u_orient, u_pos, u_len, level):
    p = img.shape[0]
    length = min(p, max(5, 5 + int(u_len * (p - 4))))
    start = (p - length) // 2
    k = min(int(u_pos * p), p - 1)
    orient = min(int(u_orient * 4), 3)
    idx = np.arange(start, start + length)
    if orient == 0:
        img[k, idx] = np.maximum(img[k, idx], level)
    elif orient == 1:
        img[idx, k] = np.maximum(img[idx, k], level)
    elif orient == 2:
        img[idx, idx] = np.maximum(img[idx, idx], level)
    else:
        img[idx, p - 1 - idx] = np.maximum(img[idx, p - 1 - idx], level)


def generate_world(config):
    if not isinstance(config, WorldConfig):
        raise ConfigError("generate_world expects a WorldConfig")
    root = Rng(config.seed)
    weather_rng, tile_rng, activity_rng, infra_rng, rf_rng, fire_rng = (
        root.spawn() for _ in range(6))
    rows, cols, T = config.rows, config.cols, config.timesteps

    region_w = _region_weather(config, weather_rng)
    regions = region_map(config)
    weather = np.ascontiguousarray(region_w[regions].transpose(2, 0, 1, 3))  # T, rows, cols, 4

    drying_rate = tile_rng.uniform(0.5, 1.5, size=(rows, cols))
    dryness = _dryness(weather[..., 0], weather[..., 3], drying_rate)

    patches, active, intensity = _activity_patches(config, activity_rng)

    n_infra = max(1, rows * cols // 100)
    cells = infra_rng.permutation(rows * cols)[:n_infra]
    infra_mask = np.zeros(rows * cols, dtype=bool)
    infra_mask[cells] = True
    infra_mask = infra_mask.reshape(rows, cols)
    infra_dist = infrastructure_distance(infra_mask)

    rf_counts = rf_rng.poisson(np.broadcast_to(2.0 * intensity, (T, rows, cols)))

    p_fire = ignition_probability(dryness, weather[..., 2], weather[..., 1], weather[..., 3],
                                  intensity[None], infra_dist[None])
    fire = (fire_rng.random((T, rows, cols)) < p_fire).astype(np.uint8)

    return WorldDataset(config=config, weather=weather, dryness=dryness, rf_counts=rf_counts,
                        fire=fire, patches=patches, activity=active, intensity=intensity,
                        infra_mask=infra_mask, infra_distance=infra_dist)


# ---------------------------------------------------------------- splitting and diagnostics

@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_times(T, train_frac=0.6, val_frac=0.2):
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac >= 1:
        raise ConfigError("split fractions must be positive and sum to less than 1")
    # small epsilon so 10 * 0.6 lands on 6, not 5.999...
    n_train = int(math.floor(T * train_frac + 1e-9))
    n_val_end = int(math.floor(T * (train_frac + val_frac) + 1e-9))
    times = np.arange(T)
    split = Split(times[:n_train], times[n_train:n_val_end], times[n_val_end:])
    if min(len(split.train), len(split.val), len(split.test)) == 0:
        raise ConfigError(f"split ({train_frac}, {val_frac}) of {T} steps leaves a part empty")
    return split


def split_dataset(ds, train_frac=0.6, val_frac=0.2):
    """Temporal split: train on the earliest times, validation next, test last."""
    return split_times(ds.config.timesteps, train_frac, val_frac)


def tile_entropy(labels):
    """Shannon entropy (bits) of the empirical distribution of a binary label sequence."""
    labels = np.asarray(labels).ravel()
    if labels.size == 0:
        raise ArgumentError("entropy of an empty label sequence")
    q = float(np.mean(labels != 0))
    return 0.0 - sum(x * math.log2(x) for x in (q, 1.0 - q) if x > 0)


def entropy_grid(fire):
    """Per-tile label entropy for a (T, rows, cols) label stack."""
    q = np.asarray(fire, dtype=np.float64).mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(q > 0, q * np.log2(q), 0.0) + np.where(q < 1, (1 - q) * np.log2(1 - q), 0.0))
    return h + 0.0  # normalise -0.0


# ---------------------------------------------------------------- file I/O

def _record_dtype():
    return np.dtype([
        ("magic", "S4"), ("version", "u1"), ("rank", "<u4"), ("dim", "<u4"),
        ("weather", "<f8", (WEATHER_DIMS,)),
        ("dryness", "<f8"), ("rf_count", "<u4"), ("infra_distance", "<f8"), ("fire", "u1"),
    ])


def _tile_dtype(p):
    return np.dtype([
        ("magic", "S4"), ("version", "u1"), ("rank", "<u4"), ("dims", "<u4", (3,)),
        ("patch", "<f8", (p * p,)),
        ("activity", "u1"), ("intensity", "<f8"), ("infra", "u1"),
    ])


_CONFIG_FMT = "<6Q"
_HEADER_SIZE = 5 + struct.calcsize(_CONFIG_FMT)


def dataset_bytes(ds):
    cfg = ds.config
    rows, cols, T, p = cfg.rows, cfg.cols, cfg.timesteps, cfg.patch_size
    out = io.BytesIO()
    out.write(DATASET_MAGIC + bytes([DATASET_VERSION]))
    out.write(struct.pack(_CONFIG_FMT, rows, cols, cfg.regions, T, cfg.seed, p))

    tiles = np.zeros(rows * cols, dtype=_tile_dtype(p))
    tiles["magic"] = TENSOR_MAGIC
    tiles["version"] = TENSOR_VERSION
    tiles["rank"] = 3
    tiles["dims"] = (1, p, p)
    tiles["patch"] = ds.patches.reshape(rows * cols, p * p)
    tiles["activity"] = ds.activity.ravel()
    tiles["intensity"] = ds.intensity.ravel()
    tiles["infra"] = ds.infra_mask.ravel()
    out.write(tiles.tobytes())

    recs = np.zeros(T * rows * cols, dtype=_record_dtype())
    recs["magic"] = TENSOR_MAGIC
    recs["version"] = TENSOR_VERSION
    recs["rank"] = 1
    recs["dim"] = WEATHER_DIMS
    recs["weather"] = ds.weather.reshape(-1, WEATHER_DIMS)
    recs["dryness"] = ds.dryness.ravel()
    recs["rf_count"] = ds.rf_counts.ravel()
    recs["infra_distance"] = np.broadcast_to(ds.infra_distance, (T, rows, cols)).ravel()
    recs["fire"] = ds.fire.ravel()
    out.write(recs.tobytes())
    return out.getvalue()


def save_dataset(ds, path):
    """Write atomically: a failed write leaves no partial file at ``path``."""
    data = dataset_bytes(ds)
    tmp = f"{path}.partial"
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _check_blob_headers(arr, base, itemsize, header_fields):
    for name, expected in header_fields:
        bad = np.flatnonzero(np.any((arr[name] != expected).reshape(len(arr), -1), axis=1))
        if len(bad):
            i = int(bad[0])
            field_off = arr.dtype.fields[name][1]
            raise FormatError(f"bad embedded tensor header field {name!r}", base + i * itemsize + field_off)


def parse_dataset(buf):
    view = memoryview(buf)
    if len(view) < 4 or bytes(view[:4]) != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic, expected {DATASET_MAGIC.decode()!r}", 0)
    if len(view) < 5:
        raise FormatError("truncated dataset header", 4)
    if view[4] != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {view[4]}", 4)
    if len(view) < _HEADER_SIZE:
        raise FormatError("truncated dataset config block", 5)
    rows, cols, regions, T, seed, p = struct.unpack_from(_CONFIG_FMT, view, 5)
    try:
        config = WorldConfig(rows=rows, cols=cols, regions=regions, timesteps=T, seed=seed, patch_size=p)
    except ConfigError as exc:
        raise FormatError(f"invalid config block: {exc}", 5) from exc

    tdt, rdt = _tile_dtype(p), _record_dtype()
    n_tiles, n_recs = rows * cols, T * rows * cols
    tile_off = _HEADER_SIZE
    rec_off = tile_off + n_tiles * tdt.itemsize
    end = rec_off + n_recs * rdt.itemsize
    if len(view) < end:
        raise FormatError(f"truncated dataset: expected {end} bytes, found {len(view)}", len(view))
    if len(view) > end:
        raise FormatError("trailing bytes after dataset records", end)

    tiles = np.frombuffer(view, dtype=tdt, count=n_tiles, offset=tile_off)
    _check_blob_headers(tiles, tile_off, tdt.itemsize,
                        [("magic", TENSOR_MAGIC), ("version", TENSOR_VERSION), ("rank", 3),
                         ("dims", np.array([1, p, p]))])
    recs = np.frombuffer(view, dtype=rdt, count=n_recs, offset=rec_off)
    _check_blob_headers(recs, rec_off, rdt.itemsize,
                        [("magic", TENSOR_MAGIC), ("version", TENSOR_VERSION), ("rank", 1),
                         ("dim", WEATHER_DIMS)])

    for name, arr, base, size in (("patch", tiles, tile_off, tdt.itemsize),
                                  ("weather", recs, rec_off, rdt.itemsize),
                                  ("dryness", recs, rec_off, rdt.itemsize)):
        bad = np.flatnonzero(~np.all(np.isfinite(arr[name].reshape(len(arr), -1)), axis=1))
        if len(bad):
            raise FormatError(f"non-finite {name} value", base + int(bad[0]) * size)
    if np.any((recs["dryness"] < 0) | (recs["dryness"] > 1)):
        raise FormatError("dryness outside [0, 1]", rec_off)
    if np.any(recs["fire"] > 1):
        raise FormatError("fire label not binary", rec_off)

    shape3 = (T, rows, cols)
    infra_distance = recs["infra_distance"].reshape(shape3)[0].copy()
    return WorldDataset(
        config=config,
        weather=recs["weather"].reshape(*shape3, WEATHER_DIMS).astype(np.float64),
        dryness=recs["dryness"].reshape(shape3).astype(np.float64),
        rf_counts=recs["rf_count"].reshape(shape3).astype(np.int64),
        fire=recs["fire"].reshape(shape3).copy(),
        patches=tiles["patch"].reshape(rows, cols, 1, p, p).astype(np.float64),
        activity=tiles["activity"].reshape(rows, cols).astype(bool),
        intensity=tiles["intensity"].reshape(rows, cols).astype(np.float64),
        infra_mask=tiles["infra"].reshape(rows, cols).astype(bool),
        infra_distance=infra_distance.astype(np.float64),
    )


def load_dataset(path):
    with open(path, "rb") as fh:
        return parse_dataset(fh.read())


def export_rf_csv(ds, path):
    """RF events as ``t,row,col,count`` rows (non-zero counts only)."""
    idx = np.argwhere(ds.rf_counts > 0)
    with open(path, "w") as fh:
        fh.write("t,row,col,count\n")
        for t, r, c in idx:
            fh.write(f"{t},{r},{c},{ds.rf_counts[t, r, c]}\n")
