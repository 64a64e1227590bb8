"""Ground-data rasters: smoothed RF event density and distance to infrastructure."""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigError

NO_INFRASTRUCTURE = 1e9


@dataclass(frozen=True)
class GroundFeatures:
    rf_density: np.ndarray  # (T, rows, cols)
    infra_distance: np.ndarray  # (rows, cols)


def _kernel_offsets(radius):
    reach = int(np.floor(3.0 * radius))
    offsets = []
    for dr in range(-reach, reach + 1):
        for dc in range(-reach, reach + 1):
            d2 = dr * dr + dc * dc
            if d2 <= (3.0 * radius) ** 2:
                offsets.append((dr, dc, np.exp(-d2 / (2.0 * radius * radius))))
    return reach, offsets


def rf_density(counts, radius):
    """Gaussian-kernel smoothing of event counts, truncated at 3*radius.

    ``counts`` is a rows×cols grid or a stack of grids with the grid on the
    last two axes.
    """
    if radius <= 0:
        raise ConfigError(f"rf radius must be positive, got {radius}")
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ArgumentError("event counts must be non-negative")
    rows, cols = counts.shape[-2:]
    reach, offsets = _kernel_offsets(radius)
    pad = [(0, 0)] * (counts.ndim - 2) + [(reach, reach), (reach, reach)]
    padded = np.pad(counts, pad)
    out = np.zeros_like(counts)
    for dr, dc, weight in offsets:
        out += weight * padded[..., reach + dr:reach + dr + rows, reach + dc:reach + dc + cols]
    return out


def infrastructure_distance(mask):
    """Exact Euclidean distance from every cell to the nearest mask cell (brute force)."""
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    sites = np.argwhere(mask)
    if len(sites) == 0:
        return np.full((rows, cols), NO_INFRASTRUCTURE)
    rr, cc = np.mgrid[0:rows, 0:cols]
    cells = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(np.float64)
    best = np.full(len(cells), np.inf)
    for start in range(0, len(sites), 256):
        chunk = sites[start:start + 256].astype(np.float64)
        d2 = ((cells[:, None, :] - chunk[None, :, :]) ** 2).sum(axis=-1)
        best = np.minimum(best, d2.min(axis=1))
    return np.sqrt(best).reshape(rows, cols)


def proximity(distance):
    return 1.0 / (1.0 + np.asarray(distance, dtype=np.float64))


def build_ground_features(rf_counts, infra_mask, radius=1.5):
    return GroundFeatures(rf_density(rf_counts, radius), infrastructure_distance(infra_mask))


def ground_feature_vector(tile, t, features):
    """[rf density at (tile, t), 1/(1 + distance to infrastructure)]."""
    row, col = tile
    T, rows, cols = features.rf_density.shape
    if not (0 <= row < rows and 0 <= col < cols):
        raise ArgumentError(f"tile {tile} outside the {rows}×{cols} grid")
    if not 0 <= t < T:
        raise ArgumentError(f"time {t} outside [0, {T})")
    return np.array([features.rf_density[t, row, col],
                     proximity(features.infra_distance[row, col])])
