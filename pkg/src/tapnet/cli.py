"""Command-line entry points: cross-validation, ablation suites, the
connectivity-weight sweep, DOT export, and gradient checking.

Config precedence: built-in defaults < config file (flat key=value lines,
keys mirror flag names) < command-line flags. Every command writes a
manifest.json into its output directory before doing any work, so a
crashed run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .data import (
    Dataset,
    DatasetFormatError,
    build_features,
    make_folds,
    parse_tu_dataset,
)
from .gradcheck import run_gradcheck
from .model import (
    POOLING_KINDS,
    TapNet,
    TapNetConfig,
    build_tapnet,
    load_checkpoint,
    save_checkpoint,
)
from .train import TrainConfig, cross_validate
from . import visualize

DEFAULTS = {
    "dataset": None,
    "data_dir": "data",
    "seed": 0,
    "epochs": 200,
    "lr": 0.001,
    "l2": 0.0008,
    "lambda": 0.1,
    "rates": "0.8,0.6,0.4",
    "pooling": "tap",
    "gating": "on",
    "aux_weight": 0.0,
    "jobs": 1,
    "out_dir": "runs",
    "batch_size": 32,
    "feature_mode": "auto",
    "hidden_dim": 48,
    "mlp_hidden": 128,
    "head_activation": "relu",
    "tol": 1e-4,
    "seeds": "0,1,2",
    "graph_index": 0,
    "checkpoint": None,
}

LAMBDA_SWEEP_VALUES = (0.01, 0.1, 1.0, 10.0, 100.0)


class UsageError(ValueError):
    pass


def _parse_rates(text: str) -> tuple[float, ...]:
    try:
        rates = tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise UsageError(f"--rates expects comma-separated floats, got {text!r}")
    if len(rates) != 3:
        raise UsageError(f"--rates expects three values, got {len(rates)}")
    return rates


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",")]
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {text!r}")


def load_config_file(path: str) -> dict:
    """Flat key=value file; '#' starts a comment; keys use flag spelling."""
    cfg = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            cfg[key.replace("-", "_")] = value
    return cfg


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    given = vars(args)
    config_path = given.pop("config", None)
    if config_path:
        for key, value in load_config_file(config_path).items():
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r} in {config_path}")
            cfg[key] = value
    for key, value in given.items():
        if key in ("command", "func"):
            continue
        cfg[key] = value
    # normalize types after file/flag merging
    for key in ("seed", "epochs", "jobs", "batch_size", "hidden_dim", "mlp_hidden", "graph_index"):
        cfg[key] = int(cfg[key])
    for key in ("lr", "l2", "lambda", "aux_weight", "tol"):
        cfg[key] = float(cfg[key])
    cfg["rates"] = _parse_rates(cfg["rates"]) if isinstance(cfg["rates"], str) else tuple(cfg["rates"])
    if cfg["gating"] not in ("on", "off"):
        raise UsageError(f"--gating must be on or off, got {cfg['gating']!r}")
    if cfg["pooling"] not in POOLING_KINDS:
        raise UsageError(
            f"--pooling must be one of {', '.join(POOLING_KINDS)}; got {cfg['pooling']!r}"
        )
    return cfg


def write_manifest(out_dir: str, command: str, cfg: dict):
    os.makedirs(out_dir, exist_ok=True)
    resolved = {k: v for k, v in cfg.items() if k != "func"}
    resolved["rates"] = list(resolved["rates"])
    digest = hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode()
    ).hexdigest()[:12]
    manifest = {
        "command": command,
        "config": resolved,
        "seed": cfg["seed"],
        "dataset": cfg.get("dataset"),
        "version": f"{__version__}+cfg.{digest}",
        "out_dir": out_dir,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_dataset(cfg: dict) -> Dataset:
    if not cfg["dataset"]:
        raise UsageError("--dataset is required")
    dataset = parse_tu_dataset(cfg["data_dir"], cfg["dataset"])
    mode = cfg["feature_mode"]
    if mode == "auto":
        has_node_labels = all(g.node_labels is not None for g in dataset.graphs)
        mode = "node_label_onehot" if has_node_labels else "degree_onehot"
    return build_features(dataset, mode)


def _model_config(cfg: dict, pooling: str | None = None, aux_weight: float | None = None) -> TapNetConfig:
    return TapNetConfig(
        hidden_dim=cfg["hidden_dim"],
        rates=cfg["rates"],
        lam=cfg["lambda"],
        mlp_hidden=cfg["mlp_hidden"],
        head_activation=cfg["head_activation"],
        pooling_kind=pooling if pooling is not None else cfg["pooling"],
        gating=cfg["gating"] == "on",
        aux_weight=aux_weight if aux_weight is not None else cfg["aux_weight"],
    )


def _train_config(cfg: dict, seed: int | None = None, aux_weight: float | None = None) -> TrainConfig:
    return TrainConfig(
        lr=cfg["lr"],
        l2_coeff=cfg["l2"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        aux_weight=aux_weight if aux_weight is not None else cfg["aux_weight"],
        seed=seed if seed is not None else cfg["seed"],
    )


def _write_metrics_csv(path: str, fold_results):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "epoch", "train_loss", "train_acc", "test_acc"])
        for r in fold_results:
            for epoch, (tl, ta, va) in enumerate(
                zip(r.train_loss, r.train_acc, r.test_acc)
            ):
                writer.writerow([r.fold_id, epoch, repr(tl), repr(ta), repr(va)])


def _write_report_json(path: str, report, timing_path: str | None = None):
    body = report.to_dict()
    wall = body.pop("wall_clock_seconds")  # kept out of JSON for determinism
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if timing_path:
        with open(timing_path, "w") as fh:
            fh.write(f"wall_clock_seconds={wall}\n")


def _save_fold_checkpoints(out_dir: str, dataset: Dataset, model_cfg: TapNetConfig, fold_results):
    for r in fold_results:
        model = build_tapnet(model_cfg, dataset.feature_dim, dataset.num_classes, r.model_seed)
        for p in model.parameters():
            p.value = r.best_params[p.name].copy()
        save_checkpoint(os.path.join(out_dir, f"fold_{r.fold_id}.npz"), model)


def cmd_crossval(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    write_manifest(out_dir, "crossval", cfg)
    dataset = _load_dataset(cfg)
    plan = make_folds(dataset, cfg["seed"])
    model_cfg = _model_config(cfg)
    report, fold_results = cross_validate(
        dataset, plan, model_cfg, _train_config(cfg), jobs=cfg["jobs"]
    )
    _write_metrics_csv(os.path.join(out_dir, "metrics.csv"), fold_results)
    _write_report_json(
        os.path.join(out_dir, "report.json"),
        report,
        os.path.join(out_dir, "timing.txt"),
    )
    visualize.plot_accuracy_curves(report.to_dict(), os.path.join(out_dir, "accuracy.png"))
    _save_fold_checkpoints(out_dir, dataset, model_cfg, fold_results)
    print(
        f"{dataset.name}: accuracy {100 * report.mean_accuracy:.1f} "
        f"+/- {100 * report.std_accuracy:.1f} (epoch {report.selected_epoch})"
    )
    return 0


ABLATION_VARIANTS = (
    ("tap", None),
    ("tap_no_lv", None),
    ("tap_no_gv", None),
    ("tap_no_gct", None),
    ("none", None),
    ("tap_aux", 0.1),
)


def cmd_ablate(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    write_manifest(out_dir, "ablate", cfg)
    dataset = _load_dataset(cfg)
    seeds = _parse_seeds(cfg["seeds"])
    rows = []
    for variant, aux in ABLATION_VARIANTS:
        pooling = "tap" if variant == "tap_aux" else variant
        aux_weight = aux if aux is not None else 0.0
        per_seed = []
        for seed in seeds:
            plan = make_folds(dataset, seed)
            report, _ = cross_validate(
                dataset,
                plan,
                _model_config(cfg, pooling=pooling, aux_weight=aux_weight),
                _train_config(cfg, seed=seed, aux_weight=aux_weight),
                jobs=cfg["jobs"],
            )
            per_seed.append(report.mean_accuracy)
        rows.append((variant, per_seed, float(np.mean(per_seed)), float(np.std(per_seed))))
    csv_path = os.path.join(out_dir, "ablation.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["variant"] + [f"seed_{s}_mean" for s in seeds] + ["mean_acc", "std_acc"]
        )
        for variant, per_seed, mean, std in rows:
            writer.writerow([variant] + [repr(v) for v in per_seed] + [repr(mean), repr(std)])
    visualize.plot_ablation(
        [r[0] for r in rows],
        [r[2] for r in rows],
        [r[3] for r in rows],
        dataset.name,
        os.path.join(out_dir, "ablation.png"),
    )
    for variant, _, mean, std in rows:
        print(f"{variant}: {100 * mean:.1f} +/- {100 * std:.1f}")
    return 0


def cmd_lambda_sweep(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    write_manifest(out_dir, "lambda-sweep", cfg)
    dataset = _load_dataset(cfg)
    plan = make_folds(dataset, cfg["seed"])
    means, stds = [], []
    for lam in LAMBDA_SWEEP_VALUES:
        local = dict(cfg)
        local["lambda"] = lam
        report, _ = cross_validate(
            dataset, plan, _model_config(local), _train_config(local), jobs=cfg["jobs"]
        )
        means.append(report.mean_accuracy)
        stds.append(report.std_accuracy)
    csv_path = os.path.join(out_dir, "lambda_sweep.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "mean_acc", "std_acc"])
        for lam, mean, std in zip(LAMBDA_SWEEP_VALUES, means, stds):
            writer.writerow([repr(lam), repr(mean), repr(std)])
    visualize.plot_lambda_sweep(
        LAMBDA_SWEEP_VALUES, means, stds, dataset.name,
        os.path.join(out_dir, "lambda_sweep.png"),
    )
    for lam, mean in zip(LAMBDA_SWEEP_VALUES, means):
        print(f"lambda={lam}: {100 * mean:.1f}")
    return 0


def cmd_export_dot(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    write_manifest(out_dir, "export-dot", cfg)
    if not cfg["checkpoint"]:
        raise UsageError("--checkpoint is required")
    if not os.path.isfile(cfg["checkpoint"]):
        raise FileNotFoundError(f"checkpoint not found: {cfg['checkpoint']}")
    model = load_checkpoint(cfg["checkpoint"])
    dataset = _load_dataset(cfg)
    index = cfg["graph_index"]
    if not 0 <= index < len(dataset.graphs):
        raise UsageError(
            f"--graph-index {index} out of range [0, {len(dataset.graphs)})"
        )
    out = model.forward(dataset.graphs[index], training=False)
    paths = visualize.export_stage_dots(out_dir, out.stage_adjacencies, out.idx_per_stage)
    for path in paths:
        print(path)
    return 0


def cmd_gradcheck(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    write_manifest(out_dir, "gradcheck", cfg)
    results = run_gradcheck(seed=cfg["seed"], tol=cfg["tol"])
    csv_path = os.path.join(out_dir, "gradcheck.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "max_rel_err", "tol", "status"])
        for r in results:
            writer.writerow([r.name, repr(r.max_rel_err), repr(r.tol), "pass" if r.passed else "FAIL"])
    ok = True
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name}: max rel err {r.max_rel_err:.3e} [{status}]")
        ok = ok and r.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tapnet",
        description="Topology-aware graph pooling networks: training and analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, dataset_flags=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.add_argument("--out-dir", dest="out_dir", default=argparse.SUPPRESS)
        if dataset_flags:
            p.add_argument("--dataset", default=argparse.SUPPRESS)
            p.add_argument("--data-dir", dest="data_dir", default=argparse.SUPPRESS)
            p.add_argument(
                "--feature-mode",
                dest="feature_mode",
                choices=("auto", "node_label_onehot", "degree_onehot"),
                default=argparse.SUPPRESS,
            )

    def add_training(p):
        p.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
        p.add_argument("--lr", type=float, default=argparse.SUPPRESS)
        p.add_argument("--l2", type=float, default=argparse.SUPPRESS)
        p.add_argument("--lambda", type=float, default=argparse.SUPPRESS)
        p.add_argument("--rates", default=argparse.SUPPRESS)
        p.add_argument("--pooling", choices=POOLING_KINDS, default=argparse.SUPPRESS)
        p.add_argument("--gating", choices=("on", "off"), default=argparse.SUPPRESS)
        p.add_argument("--aux-weight", dest="aux_weight", type=float, default=argparse.SUPPRESS)
        p.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=argparse.SUPPRESS)
        p.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=argparse.SUPPRESS)
        p.add_argument("--mlp-hidden", dest="mlp_hidden", type=int, default=argparse.SUPPRESS)
        p.add_argument(
            "--head-activation",
            dest="head_activation",
            choices=("relu", "elu"),
            default=argparse.SUPPRESS,
        )

    p = sub.add_parser("crossval", help="10-fold cross-validation")
    add_common(p)
    add_training(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("ablate", help="pooling-variant comparison over seeds")
    add_common(p)
    add_training(p)
    p.add_argument("--seeds", default=argparse.SUPPRESS, help="comma-separated seeds")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("lambda-sweep", help="connectivity-weight sweep")
    add_common(p)
    add_training(p)
    p.set_defaults(func=cmd_lambda_sweep)

    p = sub.add_parser("export-dot", help="DOT files of coarsened graph stages")
    add_common(p)
    p.add_argument("--graph-index", dest="graph_index", type=int, default=argparse.SUPPRESS)
    p.add_argument("--checkpoint", default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    add_common(p, dataset_flags=False)
    p.add_argument("--tol", type=float, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetFormatError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
