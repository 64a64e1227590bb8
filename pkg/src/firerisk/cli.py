"""Command line for the wildfire risk pipeline: gen, train, evaluate, predict, transfer, inspect.

Exit codes: 0 ok, 1 usage or bad config, 2 I/O, 3 data format, 4 consistency
(bundle/dataset mismatch, unknown region).
"""

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import report
from .bundle import load_bundle, save_bundle
from .config import resolve
from .ensemble import (SOURCES, TransferPlan, decide, evaluate_ablation, evaluate_bundle, predict,
                       region_val_loss, scratch_baseline, stack_matrix, train_components,
                       train_meta, transfer)
from .errors import (ArgumentError, ConfigError, ConsistencyError, FormatError, StateError)
from .world import entropy_grid, generate_world, load_dataset, save_dataset, split_dataset

log = logging.getLogger("firerisk")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_CONSISTENCY = 0, 1, 2, 3, 4
DATASET_NAME = "world.wfds"
BUNDLE_NAME = "bundle"
TRANSFER_BUNDLE_NAME = "bundle_transfer"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers

def _out_dir(cfg):
    if not os.path.isdir(cfg.out):
        raise FileNotFoundError(f"output directory {cfg.out!r} does not exist")
    return cfg.out


def _need(cfg, key):
    value = getattr(cfg, key)
    if not value:
        raise UsageError(f"--{key} is required for this command")
    return value


def _load_dataset(cfg):
    path = _need(cfg, "data")
    return load_dataset(path)


def _load_pair(cfg):
    ds = _load_dataset(cfg)
    bundle = load_bundle(_need(cfg, "bundle"))
    if bundle.fingerprint != ds.config.fingerprint():
        raise ConsistencyError(
            f"bundle was trained on world {bundle.fingerprint}, dataset is {ds.config.fingerprint()}")
    return ds, bundle


def _time(cfg, ds, bundle=None):
    t = cfg.t if cfg.t >= 0 else ds.config.timesteps - 1
    lo = bundle.window if bundle is not None else 0
    if not lo <= t < ds.config.timesteps:
        raise ArgumentError(f"t={t} outside [{lo}, {ds.config.timesteps})")
    return t


def _write_histories(out, histories, plots):
    for stage, hist in histories.items():
        name = stage.replace("[", "_").replace("]", "")
        report.write_text(os.path.join(out, f"history_{name}.csv"), hist.to_csv())
        if plots and len(hist):
            from .plots import plot_history
            plot_history(hist, os.path.join(out, f"loss_{name}.png"), title=stage)


# ---------------------------------------------------------------- commands

def cmd_gen(cfg):
    out = _out_dir(cfg)
    ds = generate_world(cfg.world())
    path = os.path.join(out, DATASET_NAME)
    save_dataset(ds, path)
    print(f"wrote {path}")
    print(f"records={ds.n_records} tiles={cfg.rows * cfg.cols} timesteps={cfg.timesteps}")
    print(f"fire_rate={ds.fire.mean():.4f} fingerprint={ds.config.fingerprint()}")
    return EXIT_OK


def cmd_train(cfg):
    out = _out_dir(cfg)
    ds = _load_dataset(cfg)
    ens = cfg.ensemble_config()
    split = split_dataset(ds, ens.train_frac, ens.val_frac)
    t0 = time.time()
    # stage order: region forecasters and the detector feed the meta learner
    bundle, histories = train_components(ds, ens, split)
    log.info("components trained in %.1fs", time.time() - t0)
    bundle, meta_hist = train_meta(ds, bundle, ens, split)
    histories.update(meta_hist)
    bundle.check_complete()
    log.info("meta trained, total %.1fs", time.time() - t0)
    path = os.path.join(out, BUNDLE_NAME)
    save_bundle(bundle, path)
    _write_histories(out, histories, cfg.plots)
    h = histories["meta"]
    print(f"wrote {path}")
    print(f"meta best_epoch={h.best_epoch} stopped_epoch={h.stopped_epoch} "
          f"val_loss={h.val_loss[h.best_epoch - 1]:.4f} val_auc={h.val_auc[h.best_epoch - 1]:.4f}")
    return EXIT_OK


def _split_times(cfg, ds):
    ens = cfg.ensemble_config()
    sp = split_dataset(ds, ens.train_frac, ens.val_frac)
    return {"train": sp.train, "val": sp.val, "test": sp.test}


def cmd_evaluate(cfg, ablations=False):
    out = _out_dir(cfg)
    ds, bundle = _load_pair(cfg)
    text, kv, curves = [], [], {}
    for name, times in _split_times(cfg, ds).items():
        rep, loss = evaluate_bundle(ds, bundle, times, threshold=cfg.threshold,
                                    balanced=cfg.oversample)
        text += report.metrics_lines(f"{bundle.mode} {name}", rep, loss)
        kv += report.metrics_kv(name, rep, loss)
        if name == "test":
            X, y, _, _ = stack_matrix(ds, bundle, times[times >= bundle.window])
            curves[bundle.mode] = (bundle.probabilities(X), y)
    report.write_lines(os.path.join(out, "metrics.txt"), text)
    report.write_lines(os.path.join(out, "metrics.kv"), kv)
    print("\n".join(text))
    if ablations:
        if set(bundle.ablations) != set(SOURCES):
            raise StateError("bundle has no single-source models; train with ablations = true")
        for source in SOURCES:
            a_text, a_kv = [], []
            for name, times in _split_times(cfg, ds).items():
                rep, loss = evaluate_ablation(ds, bundle, times, source, threshold=cfg.threshold,
                                              balanced=cfg.oversample)
                a_text += report.metrics_lines(f"{source}-only {name}", rep, loss)
                a_kv += report.metrics_kv(name, rep, loss)
                if name == "test":
                    X, y, _, _ = stack_matrix(ds, bundle, times[times >= bundle.window])
                    curves[f"{source}-only"] = (bundle.ablations[source].scores(X), y)
            report.write_lines(os.path.join(out, f"ablation_{source}.txt"), a_text)
            report.write_lines(os.path.join(out, f"ablation_{source}.kv"), a_kv)
            print("\n".join(a_text))
    if cfg.plots:
        from .plots import plot_roc
        plot_roc(curves, os.path.join(out, "roc_test.png"), title="test split")
    return EXIT_OK


def _parse_tile(text):
    try:
        r, c = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise UsageError(f"--tile expects ROW,COL, got {text!r}") from exc
    return r, c


def risk_grid(ds, bundle, t):
    """Per-tile predicted fire probability at time ``t`` as a rows×cols grid."""
    X, _, _, k = stack_matrix(ds, bundle, [t])
    grid = np.empty(ds.config.rows * ds.config.cols)
    grid[k] = bundle.probabilities(X)
    return grid.reshape(ds.config.rows, ds.config.cols)


def cmd_predict(cfg):
    ds, bundle = _load_pair(cfg)
    t = _time(cfg, ds, bundle)
    if cfg.tile:
        tile = _parse_tile(cfg.tile)
        prob, decision = predict(tile, t, ds, bundle, cfg.threshold)
        print(f"tile={tile[0]},{tile[1]} t={t} probability={prob!r} decision={int(decision)}")
        return EXIT_OK
    out = _out_dir(cfg)
    grid = risk_grid(ds, bundle, t)
    path = os.path.join(out, f"predictions_t{t}.csv")
    rows = [f"{r},{c},{p!r},{int(decide(p, cfg.threshold))}" for (r, c), p in np.ndenumerate(grid)]
    report.write_lines(path, ["row,col,probability,decision"] + rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_transfer(cfg):
    out = _out_dir(cfg)
    ds = _load_dataset(cfg)
    source = load_bundle(_need(cfg, "bundle"))
    ens = cfg.ensemble_config()
    plan = TransferPlan(source=cfg.source_region, target=cfg.target_region,
                        epochs=cfg.transfer_epochs, lr=cfg.transfer_lr)
    adapted, histories = transfer(source, ds, plan, ens)
    scratch, _ = scratch_baseline(ds, plan, ens)
    lt = region_val_loss(ds, adapted, plan.target, ens)
    ls = region_val_loss(ds, scratch, plan.target, ens)
    path = os.path.join(out, TRANSFER_BUNDLE_NAME)
    if os.path.abspath(path) == os.path.abspath(cfg.bundle):
        raise UsageError("transfer output would overwrite the source bundle")
    save_bundle(adapted, path)
    _write_histories(out, {f"transfer_{k}": h for k, h in histories.items()}, cfg.plots)
    report.write_lines(os.path.join(out, "transfer.csv"),
                       ["transfer_val_loss,scratch_val_loss", f"{lt!r},{ls!r}"])
    print(f"wrote {path}")
    print(f"region {plan.source} -> {plan.target}, k={plan.epochs}: "
          f"transfer_val_loss={lt:.6f} scratch_val_loss={ls:.6f}")
    return EXIT_OK


def cmd_inspect(cfg):
    out = _out_dir(cfg)
    ds = _load_dataset(cfg)
    ent = entropy_grid(ds.fire)
    report.write_grid_csv(os.path.join(out, "entropy.csv"), ent)
    report.write_pgm(os.path.join(out, "entropy.pgm"), ent, vmax=1.0)
    print(f"entropy mean={ent.mean():.4f} max={ent.max():.4f} bits")
    grids = {"entropy": (ent, "bits")}
    if cfg.bundle:
        bundle = load_bundle(cfg.bundle)
        if bundle.fingerprint != ds.config.fingerprint():
            raise ConsistencyError("bundle and dataset come from different worlds")
        t = _time(cfg, ds, bundle)
        risk = risk_grid(ds, bundle, t)
        report.write_grid_csv(os.path.join(out, "risk.csv"), risk)
        report.write_pgm(os.path.join(out, "risk.pgm"), risk, vmax=1.0)
        grids["risk"] = (risk, f"P(fire) at t={t}")
        print(f"risk t={t} mean={risk.mean():.4f} max={risk.max():.4f}")
    if cfg.plots:
        from .plots import plot_grid
        for name, (grid, label) in grids.items():
            plot_grid(grid, os.path.join(out, f"{name}.png"), f"{name} map", label)
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="existing output directory")
    common.add_argument("--data", help="dataset file")
    common.add_argument("--bundle", help="bundle directory")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    parser = _Parser(prog="firerisk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    sub.add_parser("gen", parents=[common], help="generate a synthetic world")
    p = sub.add_parser("train", parents=[common], help="train all stages into a bundle")
    p.add_argument("--ensemble", choices=("stacking", "averaging"))
    p = sub.add_parser("evaluate", parents=[common], help="metrics per split")
    p.add_argument("--ablations", action="store_true", help="also report single-source models")
    p.add_argument("--threshold", type=float)
    p = sub.add_parser("predict", parents=[common], help="fire probability for a tile or the grid")
    p.add_argument("--tile", help="ROW,COL")
    p.add_argument("--t", type=int)
    p.add_argument("--threshold", type=float)
    p = sub.add_parser("transfer", parents=[common], help="fine-tune a bundle on a target region")
    p.add_argument("--source", type=int, dest="source_region")
    p.add_argument("--target", type=int, dest="target_region")
    p.add_argument("--epochs", type=int, dest="transfer_epochs")
    p = sub.add_parser("inspect", parents=[common], help="entropy and risk maps")
    p.add_argument("--t", type=int)
    return parser


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "evaluate": cmd_evaluate, "predict": cmd_predict,
            "transfer": cmd_transfer, "inspect": cmd_inspect}
_CONFIG_KEYS = ("seed", "out", "data", "bundle", "ensemble", "threshold", "tile", "t",
                "source_region", "target_region", "transfer_epochs")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    if args.no_plots:
        overrides["plots"] = False
    try:
        cfg = resolve(args.config, **overrides)
        log.info("command %s", args.command)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, ablations=args.ablations)
        return COMMANDS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ConsistencyError, ArgumentError, StateError) as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
