import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import path_graph, star_graph, write_tu_files
from tapnet.data import (
    DatasetFormatError,
    Dataset,
    Graph,
    build_features,
    make_folds,
    parse_tu_dataset,
)


class TestParseTu:
    def test_minimal_two_node_dataset(self, tmp_path):
        base = tmp_path / "MINI"
        (tmp_path / "MINI_A.txt").write_text("1, 2\n2, 1\n")
        (tmp_path / "MINI_graph_indicator.txt").write_text("1\n1\n")
        (tmp_path / "MINI_graph_labels.txt").write_text("1\n")
        ds = parse_tu_dataset(str(tmp_path), "MINI")
        assert len(ds.graphs) == 1
        g = ds.graphs[0]
        assert g.n == 2
        assert np.array_equal(g.adjacency, [[0, 1], [1, 0]])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetFormatError, match="missing"):
            parse_tu_dataset(str(tmp_path), "NOPE")

    def test_non_integer_token_reports_location(self, tmp_path):
        (tmp_path / "BAD_A.txt").write_text("1, x\n")
        (tmp_path / "BAD_graph_indicator.txt").write_text("1\n")
        (tmp_path / "BAD_graph_labels.txt").write_text("1\n")
        with pytest.raises(DatasetFormatError, match=r"BAD_A\.txt:1"):
            parse_tu_dataset(str(tmp_path), "BAD")

    def test_node_id_out_of_range(self, tmp_path):
        (tmp_path / "OOR_A.txt").write_text("1, 9\n")
        (tmp_path / "OOR_graph_indicator.txt").write_text("1\n1\n")
        (tmp_path / "OOR_graph_labels.txt").write_text("1\n")
        with pytest.raises(DatasetFormatError, match="out of range"):
            parse_tu_dataset(str(tmp_path), "OOR")

    def test_duplicate_edges_collapse_and_self_loops_drop(self, tmp_path):
        (tmp_path / "DUP_A.txt").write_text("1, 2\n1, 2\n2, 1\n1, 1\n")
        (tmp_path / "DUP_graph_indicator.txt").write_text("1\n1\n")
        (tmp_path / "DUP_graph_labels.txt").write_text("5\n")
        ds = parse_tu_dataset(str(tmp_path), "DUP")
        g = ds.graphs[0]
        assert np.array_equal(g.adjacency, [[0, 1], [1, 0]])
        assert np.all(np.diag(g.adjacency) == 0)

    def test_labels_remapped_by_first_occurrence(self, tmp_path):
        graphs = [star_graph(3), path_graph(3), star_graph(3)]
        write_tu_files(str(tmp_path), "LBL", graphs, labels=[7, -1, 7])
        ds = parse_tu_dataset(str(tmp_path), "LBL")
        assert [g.label for g in ds.graphs] == [0, 1, 0]
        assert ds.num_classes == 2

    def test_crlf_accepted(self, tmp_path):
        (tmp_path / "CRLF_A.txt").write_text("1, 2\r\n2, 1\r\n")
        (tmp_path / "CRLF_graph_indicator.txt").write_text("1\r\n1\r\n")
        (tmp_path / "CRLF_graph_labels.txt").write_text("1\r\n")
        ds = parse_tu_dataset(str(tmp_path), "CRLF")
        assert ds.graphs[0].n == 2

    def test_roundtrip_edge_multiset(self, tmp_path, tu_toy_dir):
        ds = parse_tu_dataset(tu_toy_dir, "TOY")
        write_tu_files(str(tmp_path), "RT", [g.adjacency for g in ds.graphs],
                       [g.label for g in ds.graphs])
        rt = parse_tu_dataset(str(tmp_path), "RT")
        assert len(rt.graphs) == len(ds.graphs)
        for a, b in zip(ds.graphs, rt.graphs):
            assert np.array_equal(a.adjacency, b.adjacency)

    def test_parsed_adjacency_symmetric_zero_diagonal(self, tu_toy_dir):
        ds = parse_tu_dataset(tu_toy_dir, "TOY")
        for g in ds.graphs:
            assert np.array_equal(g.adjacency, g.adjacency.T)
            assert np.all(np.diag(g.adjacency) == 0)
            assert set(np.unique(g.adjacency)) <= {0.0, 1.0}


class TestBuildFeatures:
    def test_degree_onehot_triangle(self):
        tri = np.ones((3, 3)) - np.eye(3)
        ds = Dataset([Graph(3, tri, None, 0)], 1, 0, "t")
        out = build_features(ds, "degree_onehot")
        assert out.feature_dim == 3
        assert np.array_equal(out.graphs[0].features, np.tile([0, 0, 1], (3, 1)))

    def test_node_label_onehot(self):
        g = Graph(3, path_graph(3), None, 0, node_labels=[3, 7, 7])
        out = build_features(Dataset([g], 1, 0, "t"), "node_label_onehot")
        assert out.feature_dim == 2
        assert np.array_equal(out.graphs[0].features, [[1, 0], [0, 1], [0, 1]])

    def test_isolated_node_degree_zero(self):
        g1 = Graph(2, np.zeros((2, 2)), None, 0)
        g2 = Graph(2, path_graph(2), None, 0)
        out = build_features(Dataset([g1, g2], 1, 0, "t"), "degree_onehot")
        assert np.array_equal(out.graphs[0].features[0], [1, 0])

    def test_node_label_mode_without_labels(self):
        ds = Dataset([Graph(2, path_graph(2), None, 0)], 1, 0, "t")
        with pytest.raises(DatasetFormatError):
            build_features(ds, "node_label_onehot")

    def test_width_is_dataset_wide(self):
        small = Graph(2, path_graph(2), None, 0)  # max degree 1
        big = Graph(4, star_graph(4), None, 0)  # max degree 3
        out = build_features(Dataset([small, big], 1, 0, "t"), "degree_onehot")
        assert out.feature_dim == 4
        assert out.graphs[0].features.shape == (2, 4)


def _balanced_dataset(n_per_class, classes=2):
    graphs = []
    for c in range(classes):
        for _ in range(n_per_class):
            graphs.append(Graph(3, path_graph(3), None, c))
    return Dataset(graphs, classes, 0, "bal")


class TestMakeFolds:
    def test_exact_divisibility(self):
        plan = make_folds(_balanced_dataset(10), seed=1)
        ds = _balanced_dataset(10)
        for fold in plan.folds:
            labels = [ds.graphs[i].label for i in fold]
            assert labels.count(0) == 1 and labels.count(1) == 1

    def test_determinism(self):
        ds = _balanced_dataset(13)
        assert make_folds(ds, seed=5).folds == make_folds(ds, seed=5).folds
        assert make_folds(ds, seed=5).folds != make_folds(ds, seed=6).folds

    def test_mutag_sized_split(self):
        # 188 graphs, 125/63 class split: folds of 18 or 19 covering all
        graphs = [Graph(2, path_graph(2), None, 0) for _ in range(125)]
        graphs += [Graph(2, path_graph(2), None, 1) for _ in range(63)]
        ds = Dataset(graphs, 2, 0, "m")
        plan = make_folds(ds, seed=0)
        sizes = sorted(len(f) for f in plan.folds)
        assert set(sizes) <= {18, 19}
        union = sorted(i for f in plan.folds for i in f)
        assert union == list(range(188))

    def test_too_few_graphs(self):
        with pytest.raises(ValueError):
            make_folds(_balanced_dataset(4), seed=0)  # 8 graphs

    @given(st.integers(0, 1000), st.integers(10, 60))
    @settings(max_examples=30, deadline=None)
    def test_partition_property(self, seed, n):
        graphs = [Graph(2, path_graph(2), None, i % 3) for i in range(n)]
        ds = Dataset(graphs, 3, 0, "p")
        plan = make_folds(ds, seed)
        union = sorted(i for f in plan.folds for i in f)
        assert union == list(range(n))
        # stratification: per-fold class counts within +/-1 of the ideal
        for fold in plan.folds:
            for c in range(3):
                total_c = sum(1 for g in graphs if g.label == c)
                count = sum(1 for i in fold if graphs[i].label == c)
                assert abs(count - total_c / 10) <= 1
