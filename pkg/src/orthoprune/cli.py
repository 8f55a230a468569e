"""Command-line pipeline: train | unlearn | eval | sweep | stats | mia.

Every command is driven by a single JSON config plus the ``--seed`` and
``--out`` overrides, and re-running a command reproduces all non-timing
outputs byte for byte. Exit codes: 0 success, 2 config/validation error,
3 I/O error, 4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .channels import SelectionConfig, activation_stats, build_pruning_plan
from .checkpoint import CheckpointError, load_network, save_network
from .data import LabeledDataset, load_cifar10, partition, synth_dataset
from .evaluation import (
    MiaProtocol,
    accuracy,
    build_report,
    mia_attack,
    timed,
)
from .network import LayerSpec, build_network, desk_architecture
from .pruning import apply_soft_prune, fine_tune
from .training import OrthoConfig, TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INTERNAL = 4


class ConfigError(ValueError):
    """A config file field is missing or invalid."""


def _load_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")
    return cfg


def _section(cfg: dict, name: str, required: bool = True) -> dict:
    value = cfg.get(name)
    if value is None:
        if required:
            raise ConfigError(f"config field {name!r} is missing")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"config field {name!r} must be an object")
    return value


def _dataset_from_config(section: dict, where: str) -> LabeledDataset:
    kind = section.get("kind")
    if kind == "synth":
        try:
            return synth_dataset(
                seed=int(section["seed"]),
                class_count=int(section["class_count"]),
                per_class=int(section["per_class"]),
                side=int(section["side"]),
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: missing field {exc.args[0]!r}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if kind == "cifar10":
        paths = section.get("paths")
        if not isinstance(paths, list) or not paths:
            raise ConfigError(f"{where}.paths must be a nonempty list of files")
        return load_cifar10(paths)
    raise ConfigError(f"{where}.kind must be 'synth' or 'cifar10', got {kind!r}")


def _train_config(cfg: dict, seed_override: int | None) -> TrainConfig:
    section = _section(cfg, "train")
    try:
        tcfg = TrainConfig(
            epochs=int(section.get("epochs", 10)),
            batch_size=int(section.get("batch_size", 32)),
            eta0=float(section.get("eta0", 0.1)),
            alpha=float(section.get("alpha", 0.9)),
            seed=int(seed_override if seed_override is not None else section.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from exc
    return tcfg


def _ortho_config(cfg: dict) -> OrthoConfig:
    section = _section(cfg, "ortho", required=False)
    try:
        return OrthoConfig(
            lambda_ortho=float(section.get("lambda_ortho", 0.01)),
            epsilon_guard=float(section.get("epsilon_guard", 1e-12)),
            use_squared_variant=bool(section.get("use_squared_variant", False)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"ortho: {exc}") from exc


def _selection_config(cfg: dict, seed_override: int | None) -> SelectionConfig:
    section = _section(cfg, "selection", required=False)
    try:
        return SelectionConfig(
            ratio=float(section.get("ratio", 0.25)),
            samples_per_side=int(section.get("samples_per_side", 64)),
            seed=int(seed_override if seed_override is not None else section.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"selection: {exc}") from exc


def _architecture(cfg: dict, class_count: int) -> list[LayerSpec]:
    arch = cfg.get("architecture")
    if arch is None:
        return desk_architecture(class_count)
    if not isinstance(arch, list):
        raise ConfigError("config field 'architecture' must be a list of layer objects")
    try:
        return [LayerSpec.from_dict(d) for d in arch]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"architecture: {exc}") from exc


def _forget_classes(cfg: dict, class_count: int) -> set[int]:
    raw = cfg.get("forget_classes")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("config field 'forget_classes' must be a nonempty list")
    classes = {int(c) for c in raw}
    if any(c < 0 or c >= class_count for c in classes):
        raise ConfigError(
            f"forget_classes {sorted(classes)} outside [0, {class_count})"
        )
    if len(classes) >= class_count:
        raise ConfigError("forget_classes covers every class")
    return classes


def _lambda_floor(cfg: dict) -> float:
    value = cfg.get("lambda_floor", 0.4)
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"lambda_floor: {exc}") from exc
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"lambda_floor must be in [0, 1], got {value}")
    return value


def _out_dir(cfg: dict, args) -> Path:
    out = args.out if args.out is not None else cfg.get("output_dir", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo_config(cfg: dict, seed_override: int | None) -> dict:
    echo = json.loads(json.dumps(cfg, sort_keys=True))
    if seed_override is not None:
        echo.setdefault("train", {})["seed"] = seed_override
        echo.setdefault("selection", {})["seed"] = seed_override
    return echo


def _write_json(path: Path, doc) -> None:
    text = doc if isinstance(doc, str) else json.dumps(doc, sort_keys=True, indent=2)
    path.write_text(text + ("\n" if not text.endswith("\n") else ""), encoding="utf-8")


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    dataset = _dataset_from_config(_section(cfg, "dataset"), "dataset")
    tcfg = _train_config(cfg, args.seed)
    ocfg = _ortho_config(cfg)
    specs = _architecture(cfg, dataset.class_count)
    out = _out_dir(cfg, args)

    net = build_network(specs, dataset.image_shape, dataset.class_count, seed=tcfg.seed)
    (_, history), seconds = timed(lambda: train(net, dataset, tcfg, ocfg))

    metadata = {"seed": tcfg.seed, "epochs": tcfg.epochs, "lambda_ortho": ocfg.lambda_ortho}
    save_network(net, out / "checkpoint.okpf", metadata=metadata)
    echo = _echo_config(cfg, args.seed)
    _write_json(out / "config.json", echo)
    _write_json(out / "train_log.json", {
        "schema_version": 1,
        "config": echo,
        "loss_history": history,
        "train_seconds": seconds,
    })
    print(f"trained {tcfg.epochs} epochs in {seconds:.2f}s; "
          f"final epoch mean loss {history[-1]:.4f}; wrote {out / 'checkpoint.okpf'}")
    return EXIT_OK


def _train_seconds_for(args, cfg) -> float:
    candidates = []
    if cfg.get("train_log"):
        candidates.append(Path(cfg["train_log"]))
    candidates.append(Path(args.checkpoint).parent / "train_log.json")
    for candidate in candidates:
        if candidate.exists():
            doc = json.loads(candidate.read_text(encoding="utf-8"))
            try:
                return float(doc["train_seconds"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{candidate}: missing train_seconds") from exc
    raise ConfigError(
        "no training log found: set config field 'train_log' or keep "
        "train_log.json next to the checkpoint"
    )


def cmd_unlearn(args) -> int:
    cfg = _load_config(args.config)
    net, _ = load_network(args.checkpoint)
    train_ds = _dataset_from_config(_section(cfg, "dataset"), "dataset")
    test_ds = _dataset_from_config(_section(cfg, "test_dataset"), "test_dataset")
    forget = _forget_classes(cfg, train_ds.class_count)
    scfg = _selection_config(cfg, args.seed)
    floor = _lambda_floor(cfg)
    train_seconds = _train_seconds_for(args, cfg)
    out = _out_dir(cfg, args)

    split = partition(train_ds, forget)
    test_split = partition(test_ds, forget)

    def build_and_apply():
        plan = build_pruning_plan(net, split, scfg, floor)
        apply_soft_prune(net, plan)
        return plan

    plan, unlearn_seconds = timed(build_and_apply)
    save_network(net, out / "unlearned.okpf",
                 metadata={"pruned": True, "ratio": scfg.ratio, "lambda_floor": floor})
    _write_json(out / "plan.json", plan.to_json())

    ft_cfg = _section(cfg, "fine_tune", required=False)
    fine_tune_seconds = 0.0
    if ft_cfg.get("enabled", False):
        try:
            ftcfg = TrainConfig(
                epochs=int(ft_cfg.get("epochs", 3)),
                batch_size=int(ft_cfg.get("batch_size", 32)),
                eta0=float(ft_cfg.get("eta0", 0.005)),
                alpha=float(ft_cfg.get("alpha", 0.9)),
                seed=scfg.seed,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"fine_tune: {exc}") from exc
        _, fine_tune_seconds = timed(
            lambda: fine_tune(net, split.retain, ftcfg, _ortho_config(cfg))
        )
        save_network(net, out / "fine_tuned.okpf",
                     metadata={"pruned": True, "fine_tuned": True})

    mia = mia_attack(net, split.retain, test_split.retain, split.forget,
                     MiaProtocol(seed=scfg.seed))
    report = build_report(
        acc_forget_test=accuracy(net, test_split.forget),
        acc_retain_test=accuracy(net, test_split.retain),
        mia_success=mia,
        unlearn_seconds=unlearn_seconds,
        train_seconds=train_seconds,
        fine_tune_seconds=fine_tune_seconds,
        config=_echo_config(cfg, args.seed),
    )
    _write_json(out / "report.json", report.to_json())
    print(f"unlearned classes {sorted(forget)} in {unlearn_seconds * 1e3:.1f} ms; "
          f"acc_forget_test={report.acc_forget_test:.4f} "
          f"acc_retain_test={report.acc_retain_test:.4f} mia={report.mia_success:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    net, _ = load_network(args.checkpoint)
    test_ds = _dataset_from_config(_section(cfg, "test_dataset"), "test_dataset")
    forget = _forget_classes(cfg, test_ds.class_count)
    test_split = partition(test_ds, forget)
    doc = {
        "acc_forget_test": accuracy(net, test_split.forget),
        "acc_retain_test": accuracy(net, test_split.retain),
    }
    if args.mia:
        train_ds = _dataset_from_config(_section(cfg, "dataset"), "dataset")
        split = partition(train_ds, forget)
        scfg = _selection_config(cfg, args.seed)
        doc["mia_success"] = mia_attack(net, split.retain, test_split.retain,
                                        split.forget, MiaProtocol(seed=scfg.seed))
    out = _out_dir(cfg, args)
    _write_json(out / "eval.json", doc)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def _parse_float_list(text: str, name: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    if not values:
        raise ConfigError(f"{name} is empty")
    return values


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    ratios = _parse_float_list(args.ratios, "--ratios")
    floors = _parse_float_list(args.strengths, "--strengths")
    if any(not 0.0 < r <= 1.0 for r in ratios):
        raise ConfigError(f"--ratios must lie in (0, 1], got {ratios}")
    if any(not 0.0 <= s <= 1.0 for s in floors):
        raise ConfigError(f"--strengths must lie in [0, 1], got {floors}")

    train_ds = _dataset_from_config(_section(cfg, "dataset"), "dataset")
    test_ds = _dataset_from_config(_section(cfg, "test_dataset"), "test_dataset")
    forget = _forget_classes(cfg, train_ds.class_count)
    scfg = _selection_config(cfg, args.seed)
    out = _out_dir(cfg, args)

    if args.checkpoint:
        base_net, _ = load_network(args.checkpoint)
    else:
        tcfg = _train_config(cfg, args.seed)
        ocfg = _ortho_config(cfg)
        specs = _architecture(cfg, train_ds.class_count)
        base_net = build_network(specs, train_ds.image_shape, train_ds.class_count,
                                 seed=tcfg.seed)
        train(base_net, train_ds, tcfg, ocfg)
        save_network(base_net, out / "sweep_base.okpf",
                     metadata={"seed": tcfg.seed, "epochs": tcfg.epochs,
                               "lambda_ortho": ocfg.lambda_ortho})

    split = partition(train_ds, forget)
    test_split = partition(test_ds, forget)
    rows = []
    for ratio in ratios:
        for floor in floors:
            net = base_net.copy()
            plan = build_pruning_plan(
                net, split,
                SelectionConfig(ratio=ratio, samples_per_side=scfg.samples_per_side,
                                seed=scfg.seed),
                floor,
            )
            apply_soft_prune(net, plan)
            rows.append({
                "ratio": ratio,
                "lambda_floor": floor,
                "acc_forget_test": accuracy(net, test_split.forget),
                "acc_retain_test": accuracy(net, test_split.retain),
            })
    csv_path = out / "sweep.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["ratio", "lambda_floor", "acc_forget_test", "acc_retain_test"]
        )
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} sweep rows to {csv_path}")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _load_config(args.config)
    net, _ = load_network(args.checkpoint)
    train_ds = _dataset_from_config(_section(cfg, "dataset"), "dataset")
    forget = _forget_classes(cfg, train_ds.class_count)
    scfg = _selection_config(cfg, args.seed)
    split = partition(train_ds, forget)
    rng = np.random.default_rng(scfg.seed)
    budget = scfg.samples_per_side
    t_idx = rng.choice(len(split.forget), size=min(budget, len(split.forget)), replace=False)
    r_idx = rng.choice(len(split.retain), size=min(budget, len(split.retain)), replace=False)
    stats = activation_stats(net, split.forget.images[t_idx],
                             split.retain.images[r_idx], args.layer)
    out = _out_dir(cfg, args)
    csv_path = out / f"stats_layer{args.layer}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filter", "a_target", "a_retain", "diff"])
        for j in range(stats.filter_count):
            writer.writerow([j, float(stats.a_target[j]), float(stats.a_retain[j]),
                             float(stats.diff[j])])
    print(f"wrote {stats.filter_count} filter rows to {csv_path}")
    return EXIT_OK


def cmd_mia(args) -> int:
    cfg = _load_config(args.config)
    net, _ = load_network(args.checkpoint)
    train_ds = _dataset_from_config(_section(cfg, "dataset"), "dataset")
    test_ds = _dataset_from_config(_section(cfg, "test_dataset"), "test_dataset")
    forget = _forget_classes(cfg, train_ds.class_count)
    scfg = _selection_config(cfg, args.seed)
    split = partition(train_ds, forget)
    test_split = partition(test_ds, forget)
    success = mia_attack(net, split.retain, test_split.retain, split.forget,
                         MiaProtocol(seed=scfg.seed))
    out = _out_dir(cfg, args)
    doc = {"mia_success": success}
    _write_json(out / "mia.json", doc)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orthoprune",
        description="Train orthogonality-regularized CNNs and forget classes "
                    "by activation-guided soft pruning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, checkpoint=False):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the train/selection seeds")
        p.add_argument("--out", default=None, help="override config output_dir")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="network checkpoint")

    add_common(sub.add_parser("train", help="train a model"))
    add_common(sub.add_parser("unlearn", help="forget classes from a checkpoint"),
               checkpoint=True)
    p_eval = sub.add_parser("eval", help="evaluate forgotten/retained accuracy")
    add_common(p_eval, checkpoint=True)
    p_eval.add_argument("--mia", action="store_true", help="also run the membership attack")
    p_sweep = sub.add_parser("sweep", help="grid over pruning ratio and strength")
    add_common(p_sweep)
    p_sweep.add_argument("--checkpoint", default=None,
                         help="pre-trained base checkpoint (else trains one)")
    p_sweep.add_argument("--ratios", required=True, help="comma-separated ratios")
    p_sweep.add_argument("--strengths", required=True,
                         help="comma-separated strength floors")
    p_stats = sub.add_parser("stats", help="dump per-filter activation differences")
    add_common(p_stats, checkpoint=True)
    p_stats.add_argument("--layer", type=int, required=True, help="conv layer index")
    add_common(sub.add_parser("mia", help="membership-inference success only"),
               checkpoint=True)
    return parser


_COMMANDS = {
    "train": cmd_train,
    "unlearn": cmd_unlearn,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "stats": cmd_stats,
    "mia": cmd_mia,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, CheckpointError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
