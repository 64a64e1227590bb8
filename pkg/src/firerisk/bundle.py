"""Ensemble bundle container: a directory with a text manifest plus one WFTN blob per tensor.

manifest.txt::

    WFBUNDLE 1 <config fingerprint>
    <name> <shape, e.g. 16x20> <blob file>
    ...
"""

import os
import re
import shutil

import numpy as np

from .blobs import decode_tensor, encode_tensor
from .ensemble import MODES, SOURCES, EnsembleBundle, MetaNet
from .errors import FormatError
from .vision import CnnDetector
from .weather import LstmForecaster

MANIFEST = "manifest.txt"
HEADER = "WFBUNDLE"
FORMAT_VERSION = 1


def _meta_tensors(prefix, meta):
    out = {f"{prefix}.columns": np.array(meta.columns, dtype=np.float64),
           f"{prefix}.dropout": np.array([meta.dropout]),
           f"{prefix}.feature_mean": meta.feature_mean,
           f"{prefix}.feature_std": meta.feature_std}
    for p in meta.parameters():
        out[f"{prefix}.{p.name}"] = p.value
    return out


def bundle_tensors(bundle):
    """Flat, ordered {name: array} view of every tensor in the bundle."""
    bundle.check_complete()
    t = {
        "config.window": np.array([float(bundle.window)]),
        "config.rf_radius": np.array([bundle.rf_radius]),
        "config.mode": np.array([float(MODES.index(bundle.mode))]),
        "config.patch_size": np.array([float(bundle.detector.patch_size)]),
    }
    for region in sorted(bundle.forecasters):
        fc = bundle.forecasters[region]
        t[f"forecaster.{region}.norm_mean"] = fc.mean
        t[f"forecaster.{region}.norm_std"] = fc.std
        for p in fc.parameters():
            t[f"forecaster.{region}.{p.name}"] = p.value
    for p in bundle.detector.parameters():
        t[f"detector.{p.name}"] = p.value
    t.update(_meta_tensors("meta", bundle.meta))
    for name in sorted(bundle.ablations):
        t.update(_meta_tensors(f"ablation.{name}", bundle.ablations[name]))
    return t


def _safe(name):
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def save_bundle(bundle, directory):
    """Write the bundle; the directory is replaced as a whole so no partial bundle survives."""
    tensors = bundle_tensors(bundle)
    directory = os.path.abspath(directory)
    tmp = directory + ".partial"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    try:
        lines = [f"{HEADER} {FORMAT_VERSION} {bundle.fingerprint}"]
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=np.float64)
            blob = _safe(name) + ".wftn"
            with open(os.path.join(tmp, blob), "wb") as fh:
                fh.write(encode_tensor(arr))
            lines.append(f"{name} {'x'.join(str(d) for d in arr.shape)} {blob}")
        with open(os.path.join(tmp, MANIFEST), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        if os.path.exists(directory):
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    finally:
        if os.path.exists(tmp):
            shutil.rmtree(tmp)


def read_manifest(directory):
    path = os.path.join(directory, MANIFEST)
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError as exc:
        raise FormatError(f"no {MANIFEST} in {directory}") from exc
    if not lines:
        raise FormatError("empty manifest", 0)
    head = lines[0].split()
    if len(head) != 3 or head[0] != HEADER:
        raise FormatError(f"bad manifest header, expected {HEADER!r}", 0)
    if head[1] != str(FORMAT_VERSION):
        raise FormatError(f"unsupported bundle version {head[1]}", len(HEADER) + 1)
    entries = []
    offset = len(lines[0]) + 1
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"malformed manifest line {line!r}", offset)
        try:
            shape = tuple(int(d) for d in parts[1].split("x"))
        except ValueError as exc:
            raise FormatError(f"bad shape {parts[1]!r}", offset) from exc
        entries.append((parts[0], shape, parts[2]))
        offset += len(line) + 1
    return head[2], entries


def load_tensors(directory):
    fingerprint, entries = read_manifest(directory)
    tensors = {}
    for name, shape, blob in entries:
        if os.path.basename(blob) != blob:
            raise FormatError(f"blob path {blob!r} escapes the bundle directory")
        try:
            with open(os.path.join(directory, blob), "rb") as fh:
                buf = fh.read()
        except FileNotFoundError as exc:
            raise FormatError(f"missing blob {blob}") from exc
        try:
            arr, end = decode_tensor(buf)
        except FormatError as exc:
            raise FormatError(f"{blob}: {exc}") from exc
        if end != len(buf):
            raise FormatError(f"{blob}: trailing bytes", end)
        if arr.shape != shape:
            raise FormatError(f"{blob}: shape {arr.shape} disagrees with manifest {shape}")
        tensors[name] = arr
    return fingerprint, tensors


def _take(tensors, name):
    try:
        return tensors[name]
    except KeyError as exc:
        raise FormatError(f"bundle is missing tensor {name!r}") from exc


def _fill(params, tensors, prefix):
    for p in params:
        arr = _take(tensors, f"{prefix}.{p.name}")
        if arr.shape != p.value.shape:
            raise FormatError(f"{prefix}.{p.name}: shape {arr.shape}, expected {p.value.shape}")
        p.value[...] = arr


def _load_meta(tensors, prefix):
    columns = tuple(int(c) for c in _take(tensors, f"{prefix}.columns"))
    dropout = float(_take(tensors, f"{prefix}.dropout")[0])
    meta = MetaNet.zeros(columns, hidden=_take(tensors, f"{prefix}.dense1.bias").shape[0], dropout=dropout)
    meta.feature_mean = _take(tensors, f"{prefix}.feature_mean").copy()
    meta.feature_std = _take(tensors, f"{prefix}.feature_std").copy()
    _fill(meta.parameters(), tensors, prefix)
    return meta


def load_bundle(directory):
    fingerprint, tensors = load_tensors(directory)
    mode_idx = int(_take(tensors, "config.mode")[0])
    if not 0 <= mode_idx < len(MODES):
        raise FormatError(f"unknown ensemble mode index {mode_idx}")
    regions = sorted({int(n.split(".")[1]) for n in tensors if n.startswith("forecaster.")})
    forecasters = {}
    for region in regions:
        prefix = f"forecaster.{region}"
        proj = _take(tensors, f"{prefix}.proj.weight")
        fc = LstmForecaster.zeros(n_in=proj.shape[0], hidden=proj.shape[1])
        fc.mean = _take(tensors, f"{prefix}.norm_mean").copy()
        fc.std = _take(tensors, f"{prefix}.norm_std").copy()
        _fill(fc.parameters(), tensors, prefix)
        forecasters[region] = fc
    detector = CnnDetector.zeros(int(_take(tensors, "config.patch_size")[0]))
    _fill(detector.parameters(), tensors, "detector")
    ablations = {name: _load_meta(tensors, f"ablation.{name}")
                 for name in SOURCES if f"ablation.{name}.columns" in tensors}
    bundle = EnsembleBundle(
        forecasters=forecasters, detector=detector, meta=_load_meta(tensors, "meta"),
        fingerprint=fingerprint, window=int(_take(tensors, "config.window")[0]),
        rf_radius=float(_take(tensors, "config.rf_radius")[0]), mode=MODES[mode_idx],
        ablations=ablations)
    try:
        bundle.check_complete()
    except Exception as exc:
        raise FormatError(str(exc)) from exc
    return bundle
