"""Rewrite golden_decisions_seed42.txt from a fresh seed-42 training run.

Only run this after an intentional change to generation or training:
    python tests/data/regen_golden.py
"""

import os

import numpy as np

from firerisk.ensemble import EnsembleConfig, decide, stack_matrix, train_ensemble
from firerisk.world import WorldConfig, generate_world, split_dataset

HERE = os.path.dirname(os.path.abspath(__file__))
PATH = os.path.join(HERE, "golden_decisions_seed42.txt")


def split_probabilities(ds, bundle):
    times = split_dataset(ds).test
    X, _, _, _ = stack_matrix(ds, bundle, times[times >= bundle.window])
    return bundle.probabilities(X)


def encode(decisions):
    bits = np.packbits(np.asarray(decisions, dtype=np.uint8)).tobytes().hex()
    return [bits[i:i + 64] for i in range(0, len(bits), 64)]


def read(path=PATH):
    meta, body = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                continue
            if "=" in line:
                k, v = line.split("=", 1)
                meta[k] = v
            elif line:
                body.append(line)
    n = int(meta["n"])
    bits = np.unpackbits(np.frombuffer(bytes.fromhex("".join(body)), dtype=np.uint8))[:n]
    return meta, bits.astype(bool)


def main():
    ds = generate_world(WorldConfig(seed=42))
    bundle, _ = train_ensemble(ds, EnsembleConfig(seed=42))
    p = split_probabilities(ds, bundle)
    d = decide(p)
    with open(PATH, "w") as fh:
        fh.write("# seed-42 world, default ensemble config, threshold 0.5\n")
        fh.write("# decisions over the test split, t-major, tiles row-major, packed bits (hex)\n")
        fh.write(f"fingerprint={ds.config.fingerprint()}\nn={d.size}\npositives={int(d.sum())}\n")
        fh.write("\n".join(encode(d)) + "\n")
    print(f"wrote {PATH}: {d.size} decisions, {int(d.sum())} positive")


if __name__ == "__main__":
    main()
