import csv
import json
import os
import re

import numpy as np
import pytest

from tapnet.cli import main

FAST = [
    "--epochs", "2", "--hidden-dim", "8", "--mlp-hidden", "8", "--seed", "7",
]


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestCrossval:
    def test_writes_all_artifacts(self, tu_toy_dir, tmp_path, capsys):
        out = str(tmp_path / "run")
        rc = main(["crossval", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", out] + FAST)
        assert rc == 0
        assert os.path.isfile(os.path.join(out, "manifest.json"))
        assert os.path.isfile(os.path.join(out, "metrics.csv"))
        assert os.path.isfile(os.path.join(out, "report.json"))
        assert os.path.isfile(os.path.join(out, "accuracy.png"))
        for fold in range(10):
            assert os.path.isfile(os.path.join(out, f"fold_{fold}.npz"))
        report = json.loads(read(os.path.join(out, "report.json")))
        assert len(report["folds"]) == 10
        printed = capsys.readouterr().out
        assert re.search(r"accuracy \d+\.\d ", printed)

    def test_manifest_written_before_work(self, tmp_path):
        out = str(tmp_path / "run")
        # dataset dir is missing, so the run fails -- manifest must exist
        rc = main(["crossval", "--dataset", "TOY", "--data-dir",
                   str(tmp_path / "nope"), "--out-dir", out] + FAST)
        assert rc == 1
        assert os.path.isfile(os.path.join(out, "manifest.json"))

    def test_unknown_pooling_exits_2(self, tu_toy_dir, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["crossval", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                  "--out-dir", str(tmp_path / "x"), "--pooling", "frob"])
        assert exc.value.code == 2
        err = capsys.readouterr().err
        assert "tap" in err and "none" in err  # valid kinds listed

    def test_missing_dataset_exits_1(self, tmp_path):
        rc = main(["crossval", "--dataset", "NOPE", "--data-dir", str(tmp_path),
                   "--out-dir", str(tmp_path / "out")] + FAST)
        assert rc == 1

    def test_pooling_none_runs(self, tu_toy_dir, tmp_path):
        out = str(tmp_path / "none")
        rc = main(["crossval", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", out, "--pooling", "none"] + FAST)
        assert rc == 0

    def test_byte_identical_rerun(self, tu_toy_dir, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = str(tmp_path / tag)
            rc = main(["crossval", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                       "--out-dir", out] + FAST)
            assert rc == 0
            outs.append(out)
        for name in ("metrics.csv", "report.json"):
            assert read(os.path.join(outs[0], name)) == read(os.path.join(outs[1], name))

    def test_config_file_precedence(self, tu_toy_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs = 2\nhidden-dim = 8\nmlp-hidden = 8\nseed = 3\n")
        out = str(tmp_path / "cfgrun")
        rc = main(["crossval", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", out, "--config", str(cfg), "--seed", "9"])
        assert rc == 0
        manifest = json.loads(read(os.path.join(out, "manifest.json")))
        assert manifest["config"]["epochs"] == 2  # from file
        assert manifest["config"]["seed"] == 9  # flag wins

    def test_unknown_config_key_exits_2(self, tu_toy_dir, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("frobnicate = 1\n")
        rc = main(["crossval", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", str(tmp_path / "o"), "--config", str(cfg)])
        assert rc == 2


class TestAblate:
    def test_six_variants(self, tu_toy_dir, tmp_path):
        out = str(tmp_path / "abl")
        rc = main(["ablate", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", out, "--seeds", "0,1"] + FAST)
        assert rc == 0
        with open(os.path.join(out, "ablation.csv")) as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 7  # header + 6 variants
        variants = [r[0] for r in rows[1:]]
        assert variants == ["tap", "tap_no_lv", "tap_no_gv", "tap_no_gct", "none", "tap_aux"]
        assert os.path.isfile(os.path.join(out, "ablation.png"))


class TestLambdaSweep:
    def test_five_values_in_order(self, tu_toy_dir, tmp_path):
        out = str(tmp_path / "sweep")
        rc = main(["lambda-sweep", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", out] + FAST)
        assert rc == 0
        with open(os.path.join(out, "lambda_sweep.csv")) as fh:
            rows = list(csv.reader(fh))
        lambdas = [float(r[0]) for r in rows[1:]]
        assert lambdas == [0.01, 0.1, 1.0, 10.0, 100.0]
        assert lambdas == sorted(lambdas)
        assert os.path.isfile(os.path.join(out, "lambda_sweep.png"))

    def test_rerun_identical_csv(self, tu_toy_dir, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = str(tmp_path / tag)
            assert main(["lambda-sweep", "--dataset", "TOY", "--data-dir",
                         tu_toy_dir, "--out-dir", out] + FAST) == 0
            outs.append(out)
        assert read(os.path.join(outs[0], "lambda_sweep.csv")) == read(
            os.path.join(outs[1], "lambda_sweep.csv")
        )


class TestExportDot:
    @pytest.fixture
    def checkpoint(self, tu_toy_dir, tmp_path):
        out = str(tmp_path / "train")
        assert main(["crossval", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                     "--out-dir", out, "--epochs", "1", "--hidden-dim", "8",
                     "--mlp-hidden", "8", "--seed", "0"]) == 0
        return os.path.join(out, "fold_0.npz")

    def test_stage_files(self, tu_toy_dir, tmp_path, checkpoint):
        out = str(tmp_path / "dots")
        rc = main(["export-dot", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", out, "--checkpoint", checkpoint,
                   "--graph-index", "0"])
        assert rc == 0
        files = sorted(f for f in os.listdir(out) if f.endswith(".dot"))
        assert files == ["stage_0.dot", "stage_1.dot", "stage_2.dot", "stage_3.dot"]
        text = open(os.path.join(out, "stage_0.dot")).read()
        assert text.startswith("graph ") and text.rstrip().endswith("}")
        # input stage marks nodes dropped by the first pooling step
        assert "fillcolor=black" in text

    def test_stage_counts_match_pooling(self, tu_toy_dir, tmp_path, checkpoint):
        out = str(tmp_path / "dots2")
        assert main(["export-dot", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                     "--out-dir", out, "--checkpoint", checkpoint,
                     "--graph-index", "1"]) == 0
        import numpy as np_
        from tapnet.data import build_features, parse_tu_dataset
        from tapnet.model import load_checkpoint

        ds = build_features(parse_tu_dataset(tu_toy_dir, "TOY"), "degree_onehot")
        model = load_checkpoint(checkpoint)
        fwd = model.forward(ds.graphs[1])
        for stage, adj in enumerate(fwd.stage_adjacencies):
            text = open(os.path.join(out, f"stage_{stage}.dot")).read()
            node_lines = re.findall(r"^  n\d+.*;$", text, re.M)
            node_lines = [l for l in node_lines if "--" not in l]
            assert len(node_lines) == adj.shape[0]
            edges = len(re.findall(r"--", text))
            assert edges == int(adj.sum()) // 2

    def test_missing_checkpoint(self, tu_toy_dir, tmp_path):
        rc = main(["export-dot", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", str(tmp_path / "d"), "--checkpoint",
                   str(tmp_path / "no.npz")])
        assert rc == 1

    def test_bad_graph_index(self, tu_toy_dir, tmp_path, checkpoint):
        rc = main(["export-dot", "--dataset", "TOY", "--data-dir", tu_toy_dir,
                   "--out-dir", str(tmp_path / "d"), "--checkpoint", checkpoint,
                   "--graph-index", "99999"])
        assert rc == 2


class TestGradcheck:
    def test_passes_and_writes_csv(self, tmp_path, capsys):
        out = str(tmp_path / "gc")
        rc = main(["gradcheck", "--out-dir", out, "--seed", "0"])
        assert rc == 0
        printed = capsys.readouterr().out
        for component in ("gcn", "local_voting", "global_voting", "mlp"):
            assert component in printed
        with open(os.path.join(out, "gradcheck.csv")) as fh:
            rows = list(csv.reader(fh))
        assert all(r[-1] == "pass" for r in rows[1:])

    def test_tol_flag(self, tmp_path):
        # impossible tolerance forces failure -> nonzero exit
        rc = main(["gradcheck", "--out-dir", str(tmp_path / "gc2"),
                   "--seed", "0", "--tol", "1e-30"])
        assert rc == 1

    def test_injected_bug_detected(self):
        # harness sanity: a sign-flipped gradient must be caught
        from tapnet.autodiff import Parameter, Tape
        from tapnet import autodiff as ad
        from tapnet.gradcheck import check_gradients

        p = Parameter([[1.0, 2.0]], "p")

        def broken_loss():
            t = Tape()
            leaf = t.watch(p)
            loss = ad.sum_all(ad.mul(leaf, leaf))
            # sabotage: flip the sign of the recorded gradient
            out_id, fn = t._records[-1]
            t._records[-1] = (out_id, lambda g: [(i, -c) for i, c in fn(g)])
            return t, loss

        assert check_gradients(broken_loss, [p]) > 1e-4
