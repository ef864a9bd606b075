import csv
import json
import random
import subprocess
import sys

import numpy as np
import pytest

from synthetic import join_pair, semantic_task
from tabvec.cli import main
from tabvec.embeddings import write_vector_file
from tabvec.table import write_csv


@pytest.fixture
def analytics_csv(tmp_path):
    vectors = {}
    table, _ = semantic_task(3, n=140, vectors=vectors)
    path = tmp_path / "t.csv"
    write_csv(table, path)
    vec_path = tmp_path / "vectors.jsonl"
    write_vector_file(vec_path, list(vectors.items()))
    return path, vec_path


@pytest.fixture
def join_csvs(tmp_path):
    right, left, gold = join_pair(5, 40, 40)
    write_csv(right, tmp_path / "right.csv")
    write_csv(left, tmp_path / "left.csv")
    with open(tmp_path / "gold.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["right_id", "left_id"])
        for i, g in enumerate(gold):
            w.writerow([f"R{i}", "" if g is None else f"L{g}"])
    return tmp_path


def fast_config(tmp_path, **extra):
    p = tmp_path / "config.json"
    p.write_text(json.dumps({"learner": {"n_trees": 10}, "folds": 3, **extra}))
    return str(p)


class TestProfile:
    def test_json_on_stdout(self, analytics_csv, capsys):
        path, _ = analytics_csv
        assert main(["profile", "--input", str(path), "--seed", "0"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert [d["column"] for d in doc] == ["name", "x", "y"]
        assert all(d["sample_size"] == 140 for d in doc)

    def test_column_subset_and_out(self, analytics_csv, tmp_path):
        path, _ = analytics_csv
        out = tmp_path / "p.json"
        assert main(["profile", "--input", str(path), "--columns", "name", "--out", str(out)]) == 0
        assert [d["column"] for d in json.loads(out.read_text())] == ["name"]


class TestErrors:
    def test_missing_target_is_usage_error(self, analytics_csv, capsys):
        path, _ = analytics_csv
        assert main(["analyze", "--input", str(path)]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_flag(self, analytics_csv):
        assert main(["profile", "--input", str(analytics_csv[0]), "--bogus"]) == 1

    def test_unreadable_config(self, analytics_csv, tmp_path):
        (tmp_path / "bad.json").write_text("{")
        assert main(["profile", "--input", str(analytics_csv[0]), "--config", str(tmp_path / "bad.json")]) == 1

    def test_missing_input_is_runtime_error(self, tmp_path, capsys):
        assert main(["profile", "--input", str(tmp_path / "nope.csv")]) == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_target_column(self, analytics_csv, tmp_path):
        assert main(["analyze", "--input", str(analytics_csv[0]), "--target", "zzz",
                     "--config", fast_config(tmp_path)]) == 2


class TestAnalyze:
    def test_report(self, analytics_csv, tmp_path):
        path, vec = analytics_csv
        out = tmp_path / "r.json"
        code = main(["analyze", "--input", str(path), "--target", "y", "--encoder", "auto",
                     "--train-size", "100", "--folds", "3", "--config", fast_config(tmp_path),
                     "--backend", "file", "--backend-path", str(vec), "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert len(doc["fold_scores"]) == 3 and doc["train_size"] == 100
        assert doc["method"] == "auto" and len(doc["config_digest"]) == 64
        assert 0 <= doc["mean"] <= 1 and doc["stderr"] >= 0

    def test_same_seed_same_report(self, analytics_csv, tmp_path, capsys):
        path, _ = analytics_csv
        args = ["analyze", "--input", str(path), "--target", "y", "--encoder", "minhash",
                "--config", fast_config(tmp_path), "--seed", "7"]
        main(args)
        first = capsys.readouterr().out
        main(args)
        assert capsys.readouterr().out == first


class TestVectorize:
    def test_writes_matrix_and_routes(self, analytics_csv, tmp_path):
        path, vec = analytics_csv
        out = tmp_path / "X.csv"
        assert main(["vectorize", "--input", str(path), "--drop", "y", "--encoder", "embedding",
                     "--backend", "file", "--backend-path", str(vec), "--out", str(out)]) == 0
        rows = list(csv.reader(open(out)))
        assert rows[0][0] == "name:emb_pc0" and rows[0][-1] == "x"
        assert len(rows) == 141 and len(rows[1]) == 31
        routes = json.loads((tmp_path / "X.csv.routes.json").read_text())
        assert [r["encoder"] for r in routes] == ["embedding", "standardize"]


class TestJoin:
    def test_sweep_with_gold(self, join_csvs):
        d = join_csvs
        out, plot = d / "j.json", d / "curve.csv"
        code = main(["join", "--left", str(d / "left.csv"), "--right", str(d / "right.csv"),
                     "--left-key", "name", "--right-key", "name", "--left-id", "id", "--right-id", "id",
                     "--sweep", "--gold", str(d / "gold.csv"), "--plot-out", str(plot), "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["tau"] == doc["sweep"]["best_tau"]
        assert doc["metrics"]["f1"] == doc["sweep"]["best_f1"] > 0.8
        assert doc["matches"][0]["right_id"] == "R0"
        assert len(list(csv.reader(open(plot)))) == 8

    def test_fixed_tau_without_gold(self, join_csvs, capsys):
        d = join_csvs
        assert main(["join", "--left", str(d / "left.csv"), "--right", str(d / "right.csv"),
                     "--left-key", "name", "--right-key", "name", "--tau", "0.95"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["tau"] == 0.95 and "metrics" not in doc

    def test_sweep_needs_gold(self, join_csvs):
        d = join_csvs
        assert main(["join", "--left", str(d / "left.csv"), "--right", str(d / "right.csv"),
                     "--left-key", "name", "--right-key", "name", "--sweep"]) == 1


def write_suite(tmp_path, analytics_csv, join_dir):
    path, vec = analytics_csv
    suite = {
        "analytics": [{"name": "semantic", "path": str(path), "target": "y"}],
        "methods": [{"name": "minhash", "policy": "minhash"},
                    {"name": "embedding", "policy": "embedding",
                     "backend": {"kind": "file", "path": str(vec), "model_id": "vectors"}}],
        "settings": ["text-only"],
        "joins": [{"name": "pair", "left": str(join_dir / "left.csv"), "right": str(join_dir / "right.csv"),
                   "left_key": "name", "right_key": "name", "left_id": "id", "right_id": "id",
                   "gold": str(join_dir / "gold.csv")}],
        "join_methods": [{"name": "tfidf", "policy": "tfidf"},
                         {"name": "mock", "policy": "embedding", "backend": {"kind": "mock", "dim": 64}}],
    }
    p = tmp_path / "suite.json"
    p.write_text(json.dumps(suite))
    return p


class TestBench:
    def test_reports_and_cache(self, analytics_csv, join_csvs, tmp_path):
        suite = write_suite(tmp_path, analytics_csv, join_csvs)
        cfg = fast_config(tmp_path, train_sizes=[100])
        cache = tmp_path / "cache.jsonl"
        outs = [tmp_path / "run1", tmp_path / "run2"]
        for out in outs:
            assert main(["bench", "--suite", str(suite), "--config", cfg, "--cache", str(cache),
                         "--out", str(out)]) == 0
        for name in ("analytics_report.json", "join_report.json", "analytics_ranks.csv",
                     "analytics_cells.csv", "join_curves.csv", "join_ranks.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
        first = json.loads((outs[0] / "run_stats.json").read_text())
        second = json.loads((outs[1] / "run_stats.json").read_text())
        assert sum(s["calls"] for s in first.values()) > 0
        assert sum(s["calls"] for s in second.values()) == 0

    def test_needs_out(self, tmp_path):
        (tmp_path / "s.json").write_text("{}")
        assert main(["bench", "--suite", str(tmp_path / "s.json")]) == 1


def test_module_entry_point(analytics_csv):
    r = subprocess.run([sys.executable, "-m", "tabvec", "profile", "--input", str(analytics_csv[0])],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)[0]["column"] == "name"
