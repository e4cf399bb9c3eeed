"""TU-format dataset parsing, node feature construction, and fold splits."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class DatasetFormatError(ValueError):
    """Malformed or missing dataset file; message carries file and line."""


@dataclass
class Graph:
    n: int
    adjacency: np.ndarray  # n x n, {0,1}, symmetric, zero diagonal
    features: np.ndarray | None
    label: int
    node_labels: list[int] | None = None


@dataclass
class Dataset:
    graphs: list[Graph]
    num_classes: int
    feature_dim: int
    name: str


@dataclass
class FoldPlan:
    seed: int
    folds: list[list[int]] = field(default_factory=list)


def _read_int_lines(path: str, allow_pairs: bool = False):
    """Yield (line_number, ints) for each non-empty line."""
    with open(path, "r", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")] if "," in line else [line]
            try:
                values = [int(p) for p in parts]
            except ValueError:
                raise DatasetFormatError(
                    f"{path}:{lineno}: non-integer token in {line!r}"
                ) from None
            if allow_pairs and len(values) != 2:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected an edge pair, got {len(values)} values"
                )
            if not allow_pairs and len(values) != 1:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected a single value, got {len(values)}"
                )
            yield lineno, values


def parse_tu_dataset(data_dir: str, name: str) -> Dataset:
    """Parse NAME_A.txt / NAME_graph_indicator.txt / NAME_graph_labels.txt.

    Node and graph ids in the files are 1-indexed. Directed edge pairs are
    symmetrized, duplicates collapsed, and self-loops dropped. Graph labels
    are remapped to contiguous class indexes by first occurrence.
    """
    base = os.path.join(data_dir, name)
    a_path = f"{base}_A.txt"
    ind_path = f"{base}_graph_indicator.txt"
    lab_path = f"{base}_graph_labels.txt"
    for path in (a_path, ind_path, lab_path):
        if not os.path.isfile(path):
            raise DatasetFormatError(f"missing mandatory file: {path}")

    node_graph = []  # 0-indexed graph id per node, in node-id order
    for lineno, (gid,) in _read_int_lines(ind_path):
        if gid < 1:
            raise DatasetFormatError(f"{ind_path}:{lineno}: graph id {gid} < 1")
        node_graph.append(gid - 1)
    num_nodes = len(node_graph)
    num_graphs = max(node_graph) + 1 if node_graph else 0

    graph_labels_raw = []
    for lineno, (lab,) in _read_int_lines(lab_path):
        graph_labels_raw.append(lab)
    if len(graph_labels_raw) != num_graphs:
        raise DatasetFormatError(
            f"{lab_path}: {len(graph_labels_raw)} labels for {num_graphs} graphs"
        )

    # local node index within each graph, following indicator order
    local_index = np.zeros(num_nodes, dtype=int)
    counts = [0] * num_graphs
    for node, gid in enumerate(node_graph):
        local_index[node] = counts[gid]
        counts[gid] += 1

    edge_sets = [set() for _ in range(num_graphs)]
    for lineno, (u, v) in _read_int_lines(a_path, allow_pairs=True):
        if not (1 <= u <= num_nodes and 1 <= v <= num_nodes):
            raise DatasetFormatError(
                f"{a_path}:{lineno}: node id out of range in ({u}, {v})"
            )
        u -= 1
        v -= 1
        if node_graph[u] != node_graph[v]:
            raise DatasetFormatError(
                f"{a_path}:{lineno}: edge ({u + 1}, {v + 1}) crosses graphs"
            )
        if u == v:
            continue  # self-loops re-added downstream as A + I
        gid = node_graph[u]
        a, b = int(local_index[u]), int(local_index[v])
        edge_sets[gid].add((min(a, b), max(a, b)))

    node_labels_all = None
    nl_path = f"{base}_node_labels.txt"
    if os.path.isfile(nl_path):
        node_labels_all = [lab for _, (lab,) in _read_int_lines(nl_path)]
        if len(node_labels_all) != num_nodes:
            raise DatasetFormatError(
                f"{nl_path}: {len(node_labels_all)} labels for {num_nodes} nodes"
            )

    label_map = {}
    for lab in graph_labels_raw:
        if lab not in label_map:
            label_map[lab] = len(label_map)

    graphs = []
    for gid in range(num_graphs):
        n = counts[gid]
        adj = np.zeros((n, n))
        for a, b in edge_sets[gid]:
            adj[a, b] = 1.0
            adj[b, a] = 1.0
        node_labels = None
        if node_labels_all is not None:
            node_labels = [0] * n
            for node, owner in enumerate(node_graph):
                if owner == gid:
                    node_labels[local_index[node]] = node_labels_all[node]
        graphs.append(
            Graph(
                n=n,
                adjacency=adj,
                features=None,
                label=label_map[graph_labels_raw[gid]],
                node_labels=node_labels,
            )
        )
    return Dataset(
        graphs=graphs,
        num_classes=len(label_map),
        feature_dim=0,
        name=name,
    )


def build_features(dataset: Dataset, mode: str) -> Dataset:
    """Attach one-hot node features.

    mode "degree_onehot": width = 1 + max degree over the whole dataset.
    mode "node_label_onehot": width = number of distinct node labels, mapped
    in sorted order.
    """
    if mode == "degree_onehot":
        max_degree = 0
        for g in dataset.graphs:
            if g.n:
                max_degree = max(max_degree, int(g.adjacency.sum(axis=1).max()))
        dim = max_degree + 1
        graphs = []
        for g in dataset.graphs:
            feats = np.zeros((g.n, dim))
            degrees = g.adjacency.sum(axis=1).astype(int)
            feats[np.arange(g.n), degrees] = 1.0
            graphs.append(Graph(g.n, g.adjacency, feats, g.label, g.node_labels))
    elif mode == "node_label_onehot":
        labels = set()
        for g in dataset.graphs:
            if g.node_labels is None:
                raise DatasetFormatError(
                    f"dataset {dataset.name} has no node labels; "
                    "node_label_onehot needs the _node_labels.txt file"
                )
            labels.update(g.node_labels)
        order = {lab: i for i, lab in enumerate(sorted(labels))}
        dim = len(order)
        graphs = []
        for g in dataset.graphs:
            feats = np.zeros((g.n, dim))
            for i, lab in enumerate(g.node_labels):
                feats[i, order[lab]] = 1.0
            graphs.append(Graph(g.n, g.adjacency, feats, g.label, g.node_labels))
    else:
        raise ValueError(f"unknown feature mode: {mode!r}")
    return Dataset(graphs, dataset.num_classes, dim, dataset.name)


def make_folds(dataset: Dataset, seed: int, num_folds: int = 10) -> FoldPlan:
    """Deterministic stratified split into num_folds disjoint folds.

    Per class: seeded shuffle, then round-robin assignment continuing a
    global cursor across classes so fold sizes differ by at most one.
    """
    n = len(dataset.graphs)
    if n < num_folds:
        raise ValueError(f"need at least {num_folds} graphs, got {n}")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[int]] = {}
    for i, g in enumerate(dataset.graphs):
        by_class.setdefault(g.label, []).append(i)
    folds: list[list[int]] = [[] for _ in range(num_folds)]
    cursor = 0
    for label in sorted(by_class):
        members = np.array(by_class[label])
        rng.shuffle(members)
        for idx in members:
            folds[cursor % num_folds].append(int(idx))
            cursor += 1
    for fold in folds:
        fold.sort()
    return FoldPlan(seed=seed, folds=folds)
