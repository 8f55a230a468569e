"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the per-criterion
lines. The desk-scale pipeline (5 seeds, paired penalty-on/off models,
fine-tuning, retrain baseline, sweeps) is computed once in a module fixture.
"""

import json
import time

import numpy as np
import pytest

from orthoprune.channels import SelectionConfig, build_pruning_plan, select_pruned_set, ChannelStats
from orthoprune.cli import EXIT_OK, main
from orthoprune.data import partition, synth_dataset
from orthoprune.evaluation import MiaProtocol, accuracy, mia_attack, retrain_baseline, timed
from orthoprune.network import build_network, desk_architecture
from orthoprune.ortho import ortho_loss, ortho_loss_grad
from orthoprune.pruning import apply_soft_prune, fine_tune, pruning_strengths
from orthoprune.training import OrthoConfig, TrainConfig, train

from conftest import joint_loss_grad_check, max_rel_error, ortho_loss_f64, random_desk_network
from test_ortho import fd_grad, signed_permutation

SEEDS = (0, 1, 2, 3, 4)
CLASSES = 4
PER_CLASS = 500
PER_CLASS_TEST = 200
SIDE = 28
FORGET = {0}
RATIO = 0.25
FLOOR = 0.4
SAMPLES_PER_SIDE = 5
LAMBDA_ORTHO = 0.01
FT_EPOCHS = 3
FT_ETA0 = 0.005


def _announce(number, ok, detail):
    print(f"\nACCEPTANCE criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {number}: {detail}"


def _prune(net, split, seed):
    """Plan + apply on a copy; returns (pruned_net, plan, seconds)."""
    pruned = net.copy()

    def act():
        plan = build_pruning_plan(
            pruned, split,
            SelectionConfig(ratio=RATIO, samples_per_side=SAMPLES_PER_SIDE, seed=seed),
            FLOOR)
        apply_soft_prune(pruned, plan)
        return plan

    plan, seconds = timed(act)
    return pruned, plan, seconds


@pytest.fixture(scope="module")
def desk():
    """Full desk-scale protocol over the five seeds."""
    tcfg = lambda seed: TrainConfig(epochs=10, batch_size=32, eta0=0.1, alpha=0.9, seed=seed)
    ocfg = OrthoConfig(lambda_ortho=LAMBDA_ORTHO)
    ocfg_plain = OrthoConfig(lambda_ortho=0.0)
    runs = []
    c4_elapsed = 0.0
    for seed in SEEDS:
        start = time.perf_counter()
        train_ds = synth_dataset(seed, CLASSES, PER_CLASS, SIDE)
        test_ds = synth_dataset(seed + 1000, CLASSES, PER_CLASS_TEST, SIDE)
        split = partition(train_ds, FORGET)
        test_split = partition(test_ds, FORGET)

        net = build_network(desk_architecture(CLASSES), (1, SIDE, SIDE), CLASSES, seed=seed)
        _, train_seconds = timed(lambda: train(net, train_ds, tcfg(seed), ocfg))
        pre_f = accuracy(net, test_split.forget)
        pre_r = accuracy(net, test_split.retain)
        pruned, plan, unlearn_seconds = _prune(net, split, seed)
        post_f = accuracy(pruned, test_split.forget)
        post_r = accuracy(pruned, test_split.retain)
        c4_elapsed += time.perf_counter() - start

        tuned = pruned.copy()
        fine_tune(tuned, split.retain,
                  TrainConfig(epochs=FT_EPOCHS, batch_size=32, eta0=FT_ETA0,
                              alpha=0.9, seed=seed), ocfg)
        ft_f = accuracy(tuned, test_split.forget)
        ft_r = accuracy(tuned, test_split.retain)

        plain = build_network(desk_architecture(CLASSES), (1, SIDE, SIDE), CLASSES, seed=seed)
        train(plain, train_ds, tcfg(seed), ocfg_plain)
        plain_pruned, _, _ = _prune(plain, split, seed)
        plain_f = accuracy(plain_pruned, test_split.forget)
        plain_r = accuracy(plain_pruned, test_split.retain)

        runs.append(dict(
            seed=seed, net=net, pruned=pruned, split=split, test_split=test_split,
            train_seconds=train_seconds, unlearn_seconds=unlearn_seconds,
            pre_f=pre_f, pre_r=pre_r, post_f=post_f, post_r=post_r,
            ft_f=ft_f, ft_r=ft_r, plain_f=plain_f, plain_r=plain_r,
        ))

    # seed-0 extras: retrain baseline, membership attack trio, sweeps
    run0 = runs[0]
    retrained, retrain_seconds = retrain_baseline(
        desk_architecture(CLASSES), (1, SIDE, SIDE), CLASSES,
        run0["split"].retain, tcfg(0), ocfg)
    protocol = MiaProtocol(seed=0)
    mia = {
        "original": mia_attack(run0["net"], run0["split"].retain,
                               run0["test_split"].retain, run0["split"].forget, protocol),
        "unlearned": mia_attack(run0["pruned"], run0["split"].retain,
                                run0["test_split"].retain, run0["split"].forget, protocol),
        "retrained": mia_attack(retrained, run0["split"].retain,
                                run0["test_split"].retain, run0["split"].forget, protocol),
    }

    ratio_curve = []
    for ratio in (0.05, 0.10, 0.15, 0.20, 0.25):
        net = run0["net"].copy()
        plan = build_pruning_plan(
            net, run0["split"],
            SelectionConfig(ratio=ratio, samples_per_side=SAMPLES_PER_SIDE, seed=0), FLOOR)
        apply_soft_prune(net, plan)
        ratio_curve.append(accuracy(net, run0["test_split"].forget))
    floor_curve = []
    for floor in (1.0, 0.8, 0.6, 0.4, 0.2):
        net = run0["net"].copy()
        plan = build_pruning_plan(
            net, run0["split"],
            SelectionConfig(ratio=RATIO, samples_per_side=SAMPLES_PER_SIDE, seed=0), floor)
        apply_soft_prune(net, plan)
        floor_curve.append(accuracy(net, run0["test_split"].retain))

    return dict(runs=runs, c4_elapsed=c4_elapsed, retrained=retrained,
                retrain_seconds=retrain_seconds, mia=mia,
                ratio_curve=ratio_curve, floor_curve=floor_curve)


def test_criterion_01_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(20240811)
    ocfg = OrthoConfig(lambda_ortho=LAMBDA_ORTHO)
    worst = 0.0
    for _ in range(50):
        net, batch, labels = random_desk_network(rng)
        assert sum(p.value.size for p in net.parameters()) <= 5000
        worst = max(worst, joint_loss_grad_check(net, batch, labels, ocfg, step=1e-5))
    elapsed = time.perf_counter() - start
    _announce(1, worst < 1e-4 and elapsed < 120.0,
              f"joint-loss gradients on 50 random networks: max rel err "
              f"{worst:.2e} (< 1e-4), {elapsed:.1f}s (< 120s)")


def test_criterion_02_ortho_math_exactness():
    rng = np.random.default_rng(77)
    worst_loss = 0.0
    worst_grad = 0.0
    for _ in range(100):
        rows = int(rng.integers(1, 17))
        cols = int(rng.integers(max(2, rows // 2), 33))
        wm = rng.standard_normal((rows, cols))
        worst_loss = max(worst_loss, abs(ortho_loss(wm) - ortho_loss_f64(wm)))
        if rows >= 2:
            worst_grad = max(worst_grad, max_rel_error(ortho_loss_grad(wm), fd_grad(wm)))
    exact_ok = True
    for _ in range(10):
        wm = signed_permutation(rng, int(rng.integers(2, 8)), 16)
        exact_ok = exact_ok and ortho_loss(wm) == 0.0 and not ortho_loss_grad(wm).any()
    _announce(2, worst_loss < 1e-6 and worst_grad < 1e-4 and exact_ok,
              f"loss vs f64 oracle {worst_loss:.2e} (< 1e-6), grad vs FD "
              f"{worst_grad:.2e} (< 1e-4), orthonormal inputs exactly zero: {exact_ok}")


def test_criterion_03_schedule_exactness():
    strengths = pruning_strengths(5, 0.4)
    strengths_ok = strengths == [0.8, 0.6, 0.4, 0.4, 0.4]
    stats = ChannelStats(layer=0,
                         a_target=np.arange(100, dtype=np.float32)[::-1].copy(),
                         a_retain=np.zeros(100, dtype=np.float32))
    selected = select_pruned_set(stats, 0.02)
    select_ok = len(selected) == 2 and selected == [0, 1]
    _announce(3, strengths_ok and select_ok,
              f"pruning_strengths(5, 0.4) = {strengths}; "
              f"select_pruned_set(C_out=100, r=0.02) -> {len(selected)} filters")


def test_criterion_04_desk_scale_forgetting(desk):
    passes = sum(
        1 for r in desk["runs"]
        if r["post_f"] <= 0.05 and r["post_r"] >= r["pre_r"] - 0.10
    )
    detail = "; ".join(
        f"seed {r['seed']}: F {r['post_f']:.3f} R {r['post_r']:.3f} (pre {r['pre_r']:.3f})"
        for r in desk["runs"])
    elapsed = desk["c4_elapsed"]
    _announce(4, passes >= 4 and elapsed < 600.0,
              f"{passes}/5 seeds forget<=0.05 with retain drop<=0.10 "
              f"[{detail}] in {elapsed:.0f}s (< 600s)")


def test_criterion_05_ortho_benefit(desk):
    wins = sum(
        1 for r in desk["runs"]
        if r["post_f"] < r["plain_f"] or r["post_r"] > r["plain_r"]
    )
    detail = "; ".join(
        f"seed {r['seed']}: ortho(F={r['post_f']:.3f},R={r['post_r']:.3f}) "
        f"plain(F={r['plain_f']:.3f},R={r['plain_r']:.3f})" for r in desk["runs"])
    _announce(5, wins >= 4, f"{wins}/5 paired seeds favor the penalized model [{detail}]")


def _inversions(values, direction):
    if direction == "nonincreasing":
        return sum(1 for a, b in zip(values, values[1:]) if b > a + 1e-9)
    return sum(1 for a, b in zip(values, values[1:]) if b < a - 1e-9)


def test_criterion_06_sweep_monotonicity(desk):
    ratio_inv = _inversions(desk["ratio_curve"], "nonincreasing")
    floor_inv = _inversions(desk["floor_curve"], "nondecreasing")
    _announce(6, ratio_inv <= 1 and floor_inv <= 1,
              f"forget acc vs ratio {[round(v, 3) for v in desk['ratio_curve']]} "
              f"({ratio_inv} inversions); retain acc vs floor "
              f"{[round(v, 3) for v in desk['floor_curve']]} ({floor_inv} inversions)")


def test_criterion_07_efficiency(desk):
    worst_ratio = max(r["unlearn_seconds"] / r["train_seconds"] for r in desk["runs"])
    worst_abs = max(r["unlearn_seconds"] for r in desk["runs"])
    _announce(7, worst_ratio < 0.01 and worst_abs < 1.0,
              f"unlearn/train ratio <= {worst_ratio:.4%} (< 1%), "
              f"unlearn <= {worst_abs * 1e3:.1f} ms (< 1 s)")


def test_criterion_08_mia_polarity(desk):
    mia = desk["mia"]
    ok = (mia["original"] >= 0.6 and mia["retrained"] <= 0.15
          and mia["unlearned"] <= 0.15)
    _announce(8, ok,
              f"mia original {mia['original']:.3f} (>= 0.6), retrained "
              f"{mia['retrained']:.3f} (<= 0.15), unlearned {mia['unlearned']:.3f} (<= 0.15)")


def test_criterion_09_fine_tune_recovery(desk):
    passes = sum(
        1 for r in desk["runs"]
        if r["ft_f"] <= 0.05 and (r["ft_r"] - r["post_r"]) >= 0.01 - 1e-9
    )
    detail = "; ".join(
        f"seed {r['seed']}: +{(r['ft_r'] - r['post_r']) * 100:.1f}pt retain, "
        f"forget {r['ft_f']:.3f}" for r in desk["runs"])
    _announce(9, passes >= 4, f"{passes}/5 seeds recover >= 1 point with forget <= 0.05 [{detail}]")


def test_criterion_10_pipeline_determinism(tmp_path):
    cfg = {
        "dataset": {"kind": "synth", "seed": 0, "class_count": 4, "per_class": 200, "side": 28},
        "test_dataset": {"kind": "synth", "seed": 1000, "class_count": 4,
                         "per_class": 80, "side": 28},
        "train": {"epochs": 5, "batch_size": 32, "eta0": 0.1, "alpha": 0.9, "seed": 0},
        "ortho": {"lambda_ortho": 0.01},
        "selection": {"ratio": 0.25, "samples_per_side": 5, "seed": 0},
        "lambda_floor": 0.4,
        "forget_classes": [0],
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    artifacts = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
        assert main(["unlearn", "--config", str(cfg_path),
                     "--checkpoint", str(out / "checkpoint.okpf"),
                     "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        for field in ("unlearn_seconds", "train_seconds", "fine_tune_seconds"):
            report[field] = None
        artifacts.append((
            (out / "checkpoint.okpf").read_bytes(),
            (out / "unlearned.okpf").read_bytes(),
            (out / "plan.json").read_bytes(),
            json.dumps(report, sort_keys=True),
        ))
    same = artifacts[0] == artifacts[1]
    _announce(10, same,
              "two identical pipeline runs produced byte-identical checkpoints, "
              "plans, and reports (timing excluded)")


def test_desk_training_reaches_baseline(desk):
    # seed-0 desk model holds >= 90% accuracy on the held-out set
    run0 = desk["runs"][0]
    n_f = len(run0["test_split"].forget)
    n_r = len(run0["test_split"].retain)
    overall = (run0["pre_f"] * n_f + run0["pre_r"] * n_r) / (n_f + n_r)
    assert overall >= 0.90


def test_retrain_baseline_examples(desk):
    run0 = desk["runs"][0]
    retrained = desk["retrained"]
    forget_acc = accuracy(retrained, run0["test_split"].forget)
    retain_acc = accuracy(retrained, run0["test_split"].retain)
    ratio = desk["retrain_seconds"] / run0["unlearn_seconds"]
    assert forget_acc <= 0.05
    assert retain_acc >= run0["pre_r"] - 0.03
    assert ratio > 100.0
    print(f"\nretrain baseline: forget {forget_acc:.3f}, retain {retain_acc:.3f}, "
          f"retrain/unlearn time ratio {ratio:.0f}x")
