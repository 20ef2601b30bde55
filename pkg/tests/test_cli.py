import json
import subprocess
import sys

import pytest

from kgeval.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from kgeval.graph import SplitSpec, load_dataset, save_dataset
from kgeval.report import dumps, read_report, validate_report
from kgeval.synthetic import random_graph

FAST = ["--steps", "30", "--dim", "8"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    g = random_graph(60, 6, 300, n_types=3, seed=1, n_mediators=5, split=SplitSpec(0.8, 0.1, 0.1, 1))
    save_dataset(root / "data", g)
    assert main(["train", "--data", str(root / "data"), "--family", "transe", "--config", "tiny", *FAST,
                 "--out", str(root / "m.ckpt")]) == EXIT_OK
    return root


def _run(*argv):
    return main([str(a) for a in argv])


class TestIngestTransform:
    def test_ingest(self, tmp_path, capsys):
        (tmp_path / "train.tsv").write_text("a\tr\tb\nb\tr\tc\na\tr\tb\n")
        (tmp_path / "test.tsv").write_text("c\tr\ta\n")
        assert _run("ingest", "--train", tmp_path / "train.tsv", "--test", tmp_path / "test.tsv", "--out", tmp_path / "ds") == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["num_triples"] == 3 and summary["duplicate_count"] == 1
        assert len(load_dataset(tmp_path / "ds")) == 3

    def test_ingest_parse_error(self, tmp_path):
        (tmp_path / "train.tsv").write_text("a\tr\n")
        assert _run("ingest", "--train", tmp_path / "train.tsv", "--out", tmp_path / "ds") == EXIT_DATA

    def test_transform_chain(self, workdir, tmp_path, capsys):
        assert _run("transform", "binarize", "--data", workdir / "data", "--out", tmp_path / "bin") == EXIT_OK
        binarized = json.loads(capsys.readouterr().out)
        assert binarized["binarized_pairs"] > 0
        assert (tmp_path / "bin" / "relation_meta.tsv").exists()
        assert _run("transform", "subset", "--data", tmp_path / "bin", "--out", tmp_path / "sub",
                    "--fraction", "0.5", "--seed", "2") == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["subset_fraction"] == 0.5
        assert _run("transform", "label", "--data", tmp_path / "sub") == EXIT_OK
        assert (tmp_path / "sub" / "relation_meta.tsv").exists()


class TestTrainEval:
    def test_train_twice_identical(self, workdir, tmp_path):
        out = tmp_path / "again.ckpt"
        assert _run("train", "--data", workdir / "data", "--family", "transe", "--config", "tiny", *FAST, "--out", out) == EXIT_OK
        assert out.read_bytes() == (workdir / "m.ckpt").read_bytes()

    def test_eval_all_deterministic(self, workdir, tmp_path):
        for name in ("a.json", "b.json"):
            assert _run("eval", "all", "--model", workdir / "m.ckpt", "--data", workdir / "data",
                        "--k", "20", "--out", tmp_path / name) == EXIT_OK
        a, b = (tmp_path / "a.json").read_bytes(), (tmp_path / "b.json").read_bytes()
        assert a == b
        report = read_report(tmp_path / "a.json")
        validate_report(report)
        assert dumps(report).encode() == a
        assert set(report["protocols"]) == {"link_prediction", "entity_pair", "property", "triple_classification"}

    def test_eval_linkpred_with_filter_data(self, workdir, tmp_path):
        assert _run("transform", "subset", "--data", workdir / "data", "--out", tmp_path / "sub",
                    "--fraction", "0.5", "--seed", "0") == EXIT_OK
        assert _run("train", "--data", tmp_path / "sub", "--family", "distmult", "--config", "tiny", *FAST,
                    "--out", tmp_path / "s.ckpt") == EXIT_OK
        assert _run("eval", "linkpred", "--model", tmp_path / "s.ckpt", "--data", tmp_path / "sub",
                    "--filter-data", workdir / "data", "--out", tmp_path / "r.json",
                    "--ranks-out", tmp_path / "ranks.tsv") == EXIT_OK
        cw = read_report(tmp_path / "r.json")["protocols"]["link_prediction"]["closed_world"]
        assert cw["full_bundle"]["mrr"] >= cw["subset_bundle"]["mrr"]
        n_test = len(load_dataset(tmp_path / "sub").test)
        assert len((tmp_path / "ranks.tsv").read_text().splitlines()) == n_test

    def test_negatives_from_other_model(self, workdir, tmp_path):
        assert _run("train", "--data", workdir / "data", "--family", "rotate", "--config", "tiny", *FAST,
                    "--out", tmp_path / "gen.ckpt") == EXIT_OK
        assert _run("eval", "tripleclass", "--model", workdir / "m.ckpt", "--data", workdir / "data",
                    "--negatives-from", tmp_path / "gen.ckpt", "--out", tmp_path / "t.json") == EXIT_OK
        assert read_report(tmp_path / "t.json")["protocols"]["triple_classification"]["negatives_from"] == "RotatE"

    def test_report_render(self, workdir, tmp_path):
        assert _run("eval", "pairrank", "--model", workdir / "m.ckpt", "--data", workdir / "data",
                    "--k", "10", "--out", tmp_path / "p.json") == EXIT_OK
        for fmt in ("markdown", "csv", "json"):
            assert _run("report", "render", "--report", tmp_path / "p.json", "--format", fmt,
                        "--out", tmp_path / f"rendered.{fmt}") == EXIT_OK
        assert "MAP@10" in (tmp_path / "rendered.markdown").read_text()
        # rendering a stored report as JSON reproduces it byte for byte
        assert (tmp_path / "rendered.json").read_bytes() == (tmp_path / "p.json").read_bytes()
        assert "protocols/entity_pair/map" in (tmp_path / "rendered.csv").read_text()


class TestExitCodes:
    def test_usage(self):
        assert _run("train", "--data", "x", "--family", "conve", "--out", "y") == EXIT_USAGE
        assert _run("frobnicate") == EXIT_USAGE
        assert _run() == EXIT_USAGE

    def test_missing_config(self, workdir, tmp_path):
        assert _run("train", "--data", workdir / "data", "--family", "transe", "--config", "nope",
                    "--out", tmp_path / "m.ckpt") == EXIT_USAGE

    def test_data_errors(self, workdir, tmp_path):
        assert _run("train", "--data", tmp_path / "missing", "--family", "transe", "--out", tmp_path / "m.ckpt") == EXIT_DATA
        (tmp_path / "bad.ckpt").write_bytes(b"not a checkpoint")
        assert _run("eval", "linkpred", "--model", tmp_path / "bad.ckpt", "--data", workdir / "data") == EXIT_DATA
        other = random_graph(20, 2, 60, seed=9, split=SplitSpec(0.8, 0.1, 0.1, 9))
        save_dataset(tmp_path / "other", other)
        assert _run("eval", "linkpred", "--model", workdir / "m.ckpt", "--data", tmp_path / "other") == EXIT_DATA

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric(self, workdir, tmp_path):
        cfg = tmp_path / "explode.cfg"
        cfg.write_text("dim = 8\nlearning_rate = 1e300\nsteps = 20\nbatch_size = 32\nneg_per_pos = 4\n")
        assert _run("train", "--data", workdir / "data", "--family", "transe", "--config", cfg,
                    "--out", tmp_path / "m.ckpt") == EXIT_NUMERIC
        assert not (tmp_path / "m.ckpt").exists()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "kgeval.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "train" in out.stdout and "eval" in out.stdout
