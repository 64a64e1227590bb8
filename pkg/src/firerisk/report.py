"""Plain-text outputs: metric reports, key=value files, CSV grids, plain PGM images."""

import os

import numpy as np


def metrics_lines(name, report, loss=None):
    d = report.as_dict()
    lines = [f"[{name}]",
             f"  counts    tp={d['tp']} fp={d['fp']} tn={d['tn']} fn={d['fn']}"]
    for key in ("precision", "recall", "f1", "accuracy", "auc_roc"):
        lines.append(f"  {key:<9} {d[key]:.4f}")
    if loss is not None:
        lines.append(f"  {'loss':<9} {loss:.6f}")
    return lines


def metrics_kv(prefix, report, loss=None):
    out = [f"{prefix}.{k}={v!r}" if isinstance(v, float) else f"{prefix}.{k}={v}"
           for k, v in report.as_dict().items()]
    if loss is not None:
        out.append(f"{prefix}.loss={loss!r}")
    return out


def read_kv(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                k, v = line.split("=", 1)
                out[k] = v
    return out


def write_text(path, text):
    """Write via a sibling temp file so an interrupted run never leaves a partial file."""
    tmp = f"{path}.partial"
    try:
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def write_lines(path, lines):
    write_text(path, "\n".join(lines) + "\n")


def write_grid_csv(path, grid):
    grid = np.asarray(grid, dtype=np.float64)
    write_text(path, "".join(",".join(repr(float(v)) for v in row) + "\n" for row in grid))


def read_grid_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_pgm(path, grid, vmax=1.0, maxval=255):
    """Plain (P2) graymap; values scaled from [0, vmax] to [0, maxval]."""
    grid = np.asarray(grid, dtype=np.float64)
    levels = np.rint(np.clip(grid / vmax, 0.0, 1.0) * maxval).astype(int)
    rows, cols = levels.shape
    body = "".join(" ".join(str(v) for v in row) + "\n" for row in levels)
    write_text(path, f"P2\n{cols} {rows}\n{maxval}\n" + body)


def read_pgm(path):
    with open(path) as fh:
        tokens = [t for line in fh if not line.startswith("#") for t in line.split()]
    if tokens[0] != "P2":
        raise ValueError("not a plain graymap")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    return np.array(tokens[4:4 + rows * cols], dtype=int).reshape(rows, cols), maxval
