"""DOT export of coarsened graph stages and matplotlib report figures."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def graph_to_dot(
    adjacency: np.ndarray,
    node_ids: list[int] | None = None,
    dropped: set[int] | None = None,
) -> str:
    """Render an undirected graph as DOT.

    node_ids relabel the nodes (defaults to 0..n-1); nodes listed in
    `dropped` (positions, not labels) get a black fill to mark that the
    next pooling stage discards them.
    """
    n = adjacency.shape[0]
    if node_ids is None:
        node_ids = list(range(n))
    dropped = dropped or set()
    lines = ["graph stage {", "  node [shape=circle];"]
    for i in range(n):
        attrs = ""
        if i in dropped:
            attrs = ' [style=filled, fillcolor=black, fontcolor=white]'
        lines.append(f"  n{node_ids[i]}{attrs};")
    for i in range(n):
        for j in range(i + 1, n):
            if adjacency[i, j]:
                lines.append(f"  n{node_ids[i]} -- n{node_ids[j]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_stage_dots(
    out_dir: str,
    stage_adjacencies: list[np.ndarray],
    idx_per_stage: list[list[int]],
    prefix: str = "stage",
) -> list[str]:
    """One DOT file per stage; stage i marks the nodes that stage i+1's
    pooling drops. Node names track original input-graph node ids."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    node_ids = list(range(stage_adjacencies[0].shape[0]))
    for stage, adj in enumerate(stage_adjacencies):
        dropped: set[int] = set()
        if stage < len(idx_per_stage):
            kept = set(idx_per_stage[stage])
            dropped = {i for i in range(adj.shape[0]) if i not in kept}
        path = os.path.join(out_dir, f"{prefix}_{stage}.dot")
        with open(path, "w") as fh:
            fh.write(graph_to_dot(adj, node_ids, dropped))
        paths.append(path)
        if stage < len(idx_per_stage):
            node_ids = [node_ids[i] for i in idx_per_stage[stage]]
    return paths


def plot_accuracy_curves(report: dict, path: str):
    """Mean test-accuracy curve across folds, with the selected epoch marked."""
    curves = np.array([f["test_acc"] for f in report["folds"]])
    mean_curve = curves.mean(axis=0)
    fig, ax = plt.subplots(figsize=(7, 4))
    for fold in curves:
        ax.plot(fold, color="lightgray", linewidth=0.7)
    ax.plot(mean_curve, color="tab:blue", linewidth=2, label="mean over folds")
    sel = report["selected_epoch"]
    ax.axvline(sel, color="tab:red", linestyle="--", linewidth=1,
               label=f"selected epoch {sel}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("test accuracy")
    ax.set_title(f"{report['dataset']}: 10-fold test accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_lambda_sweep(lambdas, means, stds, dataset: str, path: str):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(lambdas, means, yerr=stds, marker="o", capsize=3)
    ax.set_xscale("log")
    ax.set_xlabel("connectivity-term weight")
    ax.set_ylabel("mean accuracy")
    ax.set_title(f"{dataset}: accuracy vs connectivity weight")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ablation(variants, means, stds, dataset: str, path: str):
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(variants))
    ax.bar(x, means, yerr=stds, capsize=3, color="tab:blue")
    ax.set_xticks(x)
    ax.set_xticklabels(variants, rotation=30, ha="right")
    ax.set_ylabel("mean accuracy")
    ax.set_title(f"{dataset}: pooling-variant comparison")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
