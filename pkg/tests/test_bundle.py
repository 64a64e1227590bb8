import os
import shutil

import numpy as np
import pytest

from firerisk.bundle import bundle_tensors, load_bundle, read_manifest, save_bundle
from firerisk.errors import FormatError
from firerisk.ensemble import stack_matrix


@pytest.fixture()
def saved(tmp_path, small_trained):
    path = tmp_path / "bundle"
    save_bundle(small_trained[0], path)
    return path


def _dir_bytes(path):
    return {name: (path / name).read_bytes() for name in sorted(os.listdir(path))}


def test_round_trip(saved, small_world, small_trained):
    bundle = small_trained[0]
    back = load_bundle(saved)
    a, b = bundle_tensors(bundle), bundle_tensors(back)
    assert list(a) == list(b) and all(np.array_equal(a[k], b[k]) for k in a)
    assert back.fingerprint == bundle.fingerprint and back.mode == bundle.mode
    X = stack_matrix(small_world, bundle, [30])[0]
    np.testing.assert_array_equal(back.probabilities(X), bundle.probabilities(X))


def test_resave_is_byte_identical(tmp_path, saved):
    again = tmp_path / "again"
    save_bundle(load_bundle(saved), again)
    assert _dir_bytes(saved) == _dir_bytes(again)
    assert not (tmp_path / "again.partial").exists()


def test_manifest_format(saved, small_trained):
    fp, entries = read_manifest(saved)
    assert fp == small_trained[0].fingerprint
    first = (saved / "manifest.txt").read_text().splitlines()[0]
    assert first == f"WFBUNDLE 1 {fp}"
    names = [e[0] for e in entries]
    assert "meta.dense1.weight" in names and "detector.conv1.kernel" in names
    assert dict((e[0], e[1]) for e in entries)["meta.dense1.weight"] == (16, 8)


def test_corrupt_blob_magic(saved):
    blob = saved / "meta.dense1.weight.wftn"
    data = bytearray(blob.read_bytes())
    data[:4] = b"JUNK"
    blob.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="WFTN"):
        load_bundle(saved)


@pytest.mark.parametrize("mutate", ["header", "version", "line", "shape", "missing", "escape",
                                    "no_manifest", "drop_tensor"])
def test_manifest_damage_is_a_format_error(saved, mutate):
    m = saved / "manifest.txt"
    lines = m.read_text().splitlines()
    if mutate == "header":
        lines[0] = "NOTABUNDLE 1 x"
    elif mutate == "version":
        lines[0] = lines[0].replace(" 1 ", " 9 ")
    elif mutate == "line":
        lines[3] = "just-two fields"
    elif mutate == "shape":
        name, _, blob = lines[3].split()
        lines[3] = f"{name} 999 {blob}"
    elif mutate == "missing":
        os.remove(saved / lines[3].split()[2])
    elif mutate == "escape":
        name, shape, _ = lines[3].split()
        lines[3] = f"{name} {shape} ../elsewhere.wftn"
    elif mutate == "drop_tensor":
        lines = [line for line in lines if not line.startswith("meta.dense2.bias")]
    if mutate == "no_manifest":
        os.remove(m)
    else:
        m.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError):
        load_bundle(saved)


def test_overwrites_previous_directory(tmp_path, small_trained):
    path = tmp_path / "b"
    path.mkdir()
    (path / "stale.txt").write_text("old")
    save_bundle(small_trained[0], path)
    assert not (path / "stale.txt").exists()
    shutil.rmtree(path)
