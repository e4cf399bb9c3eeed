import os

import numpy as np
import pytest

from tapnet.data import Dataset, Graph, build_features


def star_graph(n):
    adj = np.zeros((n, n))
    adj[0, 1:] = 1.0
    adj[1:, 0] = 1.0
    return adj


def path_graph(n):
    adj = np.zeros((n, n))
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = 1.0
    return adj


def toy_dataset(n_per_class=50, sizes=(5, 6, 7, 8), name="toy"):
    """Star graphs (class 0) vs path graphs (class 1); degree one-hot
    features make the two linearly separable."""
    graphs = []
    for i in range(n_per_class):
        n = sizes[i % len(sizes)]
        graphs.append(Graph(n, star_graph(n), None, 0))
        graphs.append(Graph(n, path_graph(n), None, 1))
    ds = Dataset(graphs, num_classes=2, feature_dim=0, name=name)
    return build_features(ds, "degree_onehot")


def random_graph(rng, n, p=0.5):
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                adj[i, j] = adj[j, i] = 1.0
    return adj


def write_tu_files(dirpath, name, graphs, labels, node_labels=None):
    """Emit a dataset in TU text format (1-indexed, comma-separated)."""
    os.makedirs(dirpath, exist_ok=True)
    base = os.path.join(dirpath, name)
    offset = 0
    a_lines, ind_lines, nl_lines = [], [], []
    for gid, adj in enumerate(graphs, start=1):
        n = adj.shape[0]
        for i in range(n):
            ind_lines.append(str(gid))
            for j in range(n):
                if adj[i, j]:
                    a_lines.append(f"{offset + i + 1}, {offset + j + 1}")
        if node_labels is not None:
            nl_lines.extend(str(v) for v in node_labels[gid - 1])
        offset += n
    with open(f"{base}_A.txt", "w") as fh:
        fh.write("\n".join(a_lines) + "\n")
    with open(f"{base}_graph_indicator.txt", "w") as fh:
        fh.write("\n".join(ind_lines) + "\n")
    with open(f"{base}_graph_labels.txt", "w") as fh:
        fh.write("\n".join(str(v) for v in labels) + "\n")
    if node_labels is not None:
        with open(f"{base}_node_labels.txt", "w") as fh:
            fh.write("\n".join(nl_lines) + "\n")


@pytest.fixture
def tu_toy_dir(tmp_path):
    """Small star-vs-path dataset on disk in TU format."""
    graphs, labels = [], []
    for i in range(12):
        n = 5 + (i % 3)
        graphs.append(star_graph(n))
        labels.append(1)
        graphs.append(path_graph(n))
        labels.append(2)
    write_tu_files(str(tmp_path), "TOY", graphs, labels)
    return str(tmp_path)
