"""End-to-end acceptance checks. Each test records one PASS/FAIL line that is
printed in the terminal summary (see conftest.py)."""

import time

import numpy as np

from conftest import SMALL_ENSEMBLE, SMALL_WORLD, TIMINGS
from firerisk.blobs import decode_tensor, encode_tensor
from firerisk.bundle import bundle_tensors, load_bundle, save_bundle
from firerisk.ensemble import (SOURCES, EnsembleConfig, TransferPlan, evaluate_ablation,
                               evaluate_bundle, fit_meta, frozen_parameters, region_val_loss,
                               scratch_baseline, split_features, stack_matrix, train_components,
                               train_ensemble, transfer)
from firerisk.errors import FormatError
from firerisk.metrics import auc_roc, confusion, evaluate_scores, precision_recall_f1
from firerisk.rng import Rng
from firerisk.trainer import overfit_onset, oversample
from firerisk.world import (WorldConfig, dataset_bytes, generate_world, load_dataset, parse_dataset,
                            save_dataset, split_dataset, tile_entropy)
from gradcheck import run_suite
from metric_cases import CASES, brute_auc, random_instances


def test_criterion_1_gradient_integrity(criterion):
    start = time.perf_counter()
    worst = run_suite(seeds=range(20))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    criterion(1, ok, f"worst relative error over 20 seeds per op: {detail}; {elapsed:.1f}s")
    assert ok


def test_criterion_2_ensemble_beats_single_sources(world42, trained42, criterion):
    bundle, _ = trained42
    start = time.perf_counter()
    split = split_dataset(world42)
    report, _ = evaluate_bundle(world42, bundle, split.test)
    single = {s: evaluate_ablation(world42, bundle, split.test, s)[0].auc_roc for s in SOURCES}
    elapsed = TIMINGS.get("train42", np.nan) + time.perf_counter() - start
    ok = report.auc_roc >= 0.85 and all(report.auc_roc >= a for a in single.values()) \
        and elapsed < 600
    parts = ", ".join(f"{s} {a:.4f}" for s, a in single.items())
    criterion(2, ok, f"stacked test AUC {report.auc_roc:.4f} vs {parts}; "
                     f"train+evaluate {elapsed:.0f}s")
    assert ok


def test_criterion_3_metric_oracles(criterion):
    auc_err = max(abs(auc_roc(s, y) - brute_auc(s, y)) for s, y in random_instances(200))
    prf_ok = True
    for scores, labels, threshold, counts, prf in CASES:
        c = confusion(scores, labels, threshold)
        prf_ok &= (c.tp, c.fp, c.tn, c.fn) == counts
        prf_ok &= precision_recall_f1(c) == tuple(float(v) for v in prf)
    ok = auc_err <= 1e-9 and prf_ok
    criterion(3, ok, f"max AUC deviation {auc_err:.1e} over 200 tied instances; "
                     f"{len(CASES)} hand-tallied cases {'exact' if prf_ok else 'MISMATCH'}")
    assert ok


def _imbalance_run(seed):
    """(raw train acc, oversampled train acc, raw test recall, oversampled test recall)."""
    ds = generate_world(WorldConfig(rows=16, cols=16, seed=seed))
    split = split_dataset(ds)
    cfg = EnsembleConfig(seed=seed, ablations=False)
    bundle, _ = train_components(ds, cfg, split)
    (x_tr, y_tr, _, _), (x_va, y_va, _, _) = split_features(ds, bundle, split)
    x_te, y_te, _, _ = stack_matrix(ds, bundle, split.test)
    meta_cfg = cfg.seeded()[2]
    raw, _ = fit_meta((x_tr, y_tr), (x_va, y_va), meta_cfg.with_(oversample=False))
    bal, _ = fit_meta((x_tr, y_tr), (x_va, y_va), meta_cfg.with_(oversample=True))
    # accuracy on the training data each model was actually fit to
    x_ov, y_ov = oversample(x_tr, y_tr, Rng(seed))
    return (evaluate_scores(raw.scores(x_tr), y_tr).accuracy,
            evaluate_scores(bal.scores(x_ov), y_ov).accuracy,
            evaluate_scores(raw.scores(x_te), y_te).recall,
            evaluate_scores(bal.scores(x_te), y_te).recall)


def test_criterion_4_oversampling_trades_accuracy_for_recall(criterion):
    rows = {seed: _imbalance_run(seed) for seed in range(1, 6)}
    held = [s for s, (acc_raw, acc_bal, rec_raw, rec_bal) in rows.items()
            if acc_bal < acc_raw and rec_bal > rec_raw]
    ok = len(held) >= 4
    detail = "; ".join(f"s{s} acc {a:.3f}->{b:.3f} recall {c:.3f}->{d:.3f}"
                       for s, (a, b, c, d) in rows.items())
    criterion(4, ok, f"{len(held)}/5 seeds hold ({detail})")
    assert ok


def test_criterion_5_overfitting_and_early_stopping(world42, trained42, criterion):
    bundle, _ = trained42
    split = split_dataset(world42)
    (x_tr, y_tr, _, _), (x_va, y_va, _, _) = split_features(world42, bundle, split)
    val = (x_va, y_va)
    n = int(0.05 * len(x_tr))  # earliest 5% of training records
    small = (x_tr[:n], y_tr[:n])
    meta_cfg = EnsembleConfig(seed=42).seeded()[2]
    _, free = fit_meta(small, val, meta_cfg.with_(epochs=13, early_stopping=False))
    onset = overfit_onset(free, run=3, max_epoch=10)
    _, stopped = fit_meta(small, val, meta_cfg.with_(epochs=13, early_stop_patience=1))
    ok = onset is not None and stopped.best_epoch <= onset
    criterion(5, ok, f"{n} train records; rise begins after epoch {onset} "
                     f"(val {np.round(free.val_loss[:6], 3).tolist()}, "
                     f"train {np.round(free.train_loss[:6], 3).tolist()}); "
                     f"early stopping best_epoch {stopped.best_epoch}")
    assert ok


def test_criterion_6_transfer_head_start(criterion):
    wins, frozen_same, lines = 0, True, []
    plan = TransferPlan(source=0, target=3, epochs=3)
    for seed in range(1, 11):
        ds = generate_world(WorldConfig(rows=16, cols=16, seed=seed))
        cfg = EnsembleConfig(seed=seed, ablations=False)
        source, _ = train_ensemble(ds, cfg, regions=[plan.source])
        before = [p.value.tobytes() for p in frozen_parameters(source, plan)]
        adapted, _ = transfer(source, ds, plan, cfg)
        after = [p.value.tobytes() for p in frozen_parameters(adapted, plan)]
        frozen_same &= before == after and len(before) > 0
        scratch, _ = scratch_baseline(ds, plan, cfg)
        lt = region_val_loss(ds, adapted, plan.target, cfg)
        ls = region_val_loss(ds, scratch, plan.target, cfg)
        wins += lt <= ls
        lines.append(f"s{seed} {lt:.3f}/{ls:.3f}")
    ok = wins >= 8 and frozen_same
    criterion(6, ok, f"transfer beats scratch in {wins}/10 seeds (transfer/scratch val loss "
                     f"{' '.join(lines)}); frozen parameters byte-identical: {frozen_same}")
    assert ok


def _dir_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_criterion_7_determinism_and_formats(small_world, small_trained, tmp_path, criterion):
    checks = {}
    checks["dataset bytes"] = dataset_bytes(generate_world(SMALL_WORLD)) == dataset_bytes(small_world)

    again, _ = train_ensemble(generate_world(SMALL_WORLD), SMALL_ENSEMBLE)
    save_bundle(small_trained[0], tmp_path / "a")
    save_bundle(again, tmp_path / "b")
    checks["bundle dirs"] = _dir_bytes(tmp_path / "a") == _dir_bytes(tmp_path / "b")

    save_dataset(small_world, tmp_path / "w.wfds")
    checks["dataset round-trip"] = load_dataset(tmp_path / "w.wfds").equals(small_world)
    reloaded = bundle_tensors(load_bundle(tmp_path / "a"))
    checks["bundle round-trip"] = all(np.array_equal(v, reloaded[k])
                                      for k, v in bundle_tensors(small_trained[0]).items())
    arr = Rng(1).normal(size=(3, 4, 2))
    checks["tensor round-trip"] = np.array_equal(decode_tensor(encode_tensor(arr))[0], arr)

    def rejects(fn, buf):
        try:
            fn(buf)
        except FormatError:
            return True
        return False

    blob = bytearray(encode_tensor(arr))
    blob[:4] = b"XXXX"
    data = bytearray(dataset_bytes(small_world))
    data[:4] = b"XXXX"
    manifest = tmp_path / "a" / "manifest.txt"
    manifest.write_text("XXBUNDLE" + manifest.read_text()[8:])
    checks["bad magic raises FormatError"] = (rejects(decode_tensor, bytes(blob))
                                              and rejects(parse_dataset, bytes(data))
                                              and rejects(load_bundle, tmp_path / "a"))
    ok = all(checks.values())
    criterion(7, ok, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok


def test_criterion_8_entropy(criterion):
    got = (tile_entropy([1] * 8), tile_entropy([0, 1] * 4), tile_entropy([1, 0, 0, 0] * 2))
    want = (0.0, 1.0, 0.811278)
    ok = all(abs(g - w) <= 1e-6 for g, w in zip(got, want))
    criterion(8, ok, "constant {:.6f}, balanced {:.6f}, quarter {:.6f} bits".format(*got))
    assert ok
