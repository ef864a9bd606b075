"""Analytics and fuzzy-join benchmark grids, with JSON reports and plot-data CSVs."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import SETTINGS, PipelineConfig
from .embeddings import BackendConfig, Embedder, EmbeddingCache, make_backend
from .join import JoinSpec, load_gold, sweep_thresholds
from .learners.metrics import rank_matrix, relative_gain
from .learners.validation import cross_validate
from .pipeline import TabularModel
from .table import SupervisedDataset, Table, binarize_and_balance, load_csv

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
RANK_POOLING = "rank per (dataset, setting, train_size); average over datasets and settings"


@dataclass
class AnalyticsTask:
    name: str
    table: Table
    target: str
    group: str | None = None


@dataclass
class JoinTask:
    name: str
    right: Table
    left: Table
    right_key: str
    left_key: str
    gold: list[int | None]


@dataclass
class Method:
    """A benchmark contender: a text policy (analytics) or join encoder plus
    an optional embedder."""

    name: str
    policy: str = "minhash"
    embedder: Embedder | None = None
    learner: str = "gbdt"


@dataclass
class BenchmarkReport:
    config_digest: str
    cells: list[dict]
    gains: list[dict] = field(default_factory=list)
    mean_ranks: list[dict] = field(default_factory=list)
    baseline: str = ""
    metric: str = "roc_auc"
    notes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config_digest": self.config_digest,
            "metric": self.metric,
            "baseline": self.baseline,
            "cells": self.cells,
            "gains": self.gains,
            "mean_ranks": self.mean_ranks,
            "notes": self.notes,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def mean_rank_of(self, method: str, train_size=None) -> float:
        for r in self.mean_ranks:
            if r["method"] == method and r["train_size"] == train_size:
                return r["mean_rank"]
        raise KeyError((method, train_size))


def derive_seed(root: int, *path: int) -> int:
    return int(np.random.SeedSequence([root & 0xFFFFFFFF, *path]).generate_state(1)[0])


def stratified_subsample(dataset: SupervisedDataset, size: int, seed: int) -> SupervisedDataset:
    """Keep ``size`` rows with both classes in equal proportion (dataset is balanced)."""
    n = len(dataset.target)
    if size >= n:
        if size > n:
            log.warning("dataset has %d rows; train size %d clamped", n, size)
        return dataset
    y = dataset.y
    rng = np.random.default_rng(seed)
    pos, neg = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    k_pos = size // 2
    keep = np.concatenate([rng.choice(pos, k_pos, replace=False),
                           rng.choice(neg, size - k_pos, replace=False)])
    return dataset.subset(sorted(int(i) for i in keep))


def _aggregate(cells: list[dict], methods: list[str], baseline: str | None,
               task_keys: tuple[str, ...], group_key: str | None) -> tuple[list[dict], list[dict]]:
    """Mean ranks and mean gains per method (and per ``group_key`` value)."""
    groups = sorted({c[group_key] for c in cells}, key=str) if group_key else [None]
    ranks_out, gains_out = [], []
    for g in groups:
        sub = [c for c in cells if group_key is None or c[group_key] == g]
        tasks = sorted({tuple(c[k] for k in task_keys) for c in sub}, key=str)
        lookup = {(tuple(c[k] for k in task_keys), c["method"]): c["mean"] for c in sub}
        S = np.array([[lookup[(t, m)] for t in tasks] for m in methods])
        R = rank_matrix(S)
        for i, m in enumerate(methods):
            ranks_out.append({"method": m, "train_size": g, "mean_rank": float(R[i].mean())})
        if baseline is None:
            continue
        b = methods.index(baseline)
        for i, m in enumerate(methods):
            vals = [relative_gain(S[i, t], S[b, t]) for t in range(len(tasks)) if S[b, t] > 0]
            gains_out.append({"method": m, "train_size": g, "baseline": baseline,
                              "mean_gain_pct": float(np.mean(vals)) if vals else None,
                              "n_tasks": len(vals)})
    return ranks_out, gains_out


def run_analytics_benchmark(tasks: Sequence[AnalyticsTask], methods: Sequence[Method],
                            config: PipelineConfig, settings: Sequence[str] = SETTINGS,
                            baseline: str | None = "minhash") -> BenchmarkReport:
    """Cross-validated ROC-AUC for every (dataset, train size, setting, method).

    Datasets are binarized and balanced, then subsampled to each train size.
    Folds depend on (root seed, dataset, size) only, so every method and
    setting sees the same splits.
    """
    names = [m.name for m in methods]
    if baseline is not None and baseline not in names:
        baseline = None
    cells = []
    for di, task in enumerate(tasks):
        full = binarize_and_balance(task.table, task.target, derive_seed(config.seed, di), task.group)
        for si, size in enumerate(config.train_sizes):
            seed = derive_seed(config.seed, di, si)
            data = stratified_subsample(full, size, seed)
            for setting in settings:
                for m in methods:
                    cfg = config.with_overrides(text_encoder_policy=m.policy, seed=seed)
                    rep = cross_validate(
                        data, lambda: TabularModel(cfg, m.embedder, setting, m.learner),
                        folds=config.folds, seed=seed, method=m.name)
                    cells.append({"dataset": task.name, "setting": setting, "method": m.name,
                                  "train_size": size, "n_rows": len(data.target), "metric": "roc_auc",
                                  "mean": rep.mean, "stderr": rep.stderr,
                                  "fold_scores": rep.fold_scores})
    ranks, gains = _aggregate(cells, names, baseline, ("dataset", "setting"), "train_size")
    overall_ranks, overall_gains = _aggregate(cells, names, baseline,
                                              ("dataset", "setting", "train_size"), None)
    return BenchmarkReport(config.digest(), cells, gains + overall_gains, ranks + overall_ranks,
                           baseline or "", "roc_auc", {"rank_pooling": RANK_POOLING})


def run_column_gain(task: AnalyticsTask, column: str, embedder: Embedder, config: PipelineConfig,
                    train_size: int = 1000) -> dict:
    """Gain from embedding one text column instead of MinHashing it, with every
    other column encoded as before."""
    full = binarize_and_balance(task.table, task.target, derive_seed(config.seed, 0), task.group)
    seed = derive_seed(config.seed, 0, 0)
    data = stratified_subsample(full, train_size, seed)
    base_cfg = config.with_overrides(text_encoder_policy="minhash", seed=seed)
    var_cfg = base_cfg.with_overrides(column_policies={**config.column_policies, column: "embedding"})
    base = cross_validate(data, lambda: TabularModel(base_cfg, embedder), config.folds, seed, "minhash")
    var = cross_validate(data, lambda: TabularModel(var_cfg, embedder), config.folds, seed, "embedding")
    return {"dataset": task.name, "column": column, "train_size": len(data.target),
            "baseline_auc": base.mean, "method_auc": var.mean,
            "gain_pct": relative_gain(var.mean, base.mean)}


def run_join_benchmark(tasks: Sequence[JoinTask], methods: Sequence[Method], config: PipelineConfig,
                       baseline: str | None = "tfidf") -> tuple[BenchmarkReport, list[dict]]:
    """Best-F1 over the threshold sweep for every (pair, method).

    Returns the report and the per-threshold curve rows for plotting.
    """
    names = [m.name for m in methods]
    if baseline is not None and baseline not in names:
        baseline = None
    cells, curves = [], []
    for task in tasks:
        for m in methods:
            spec = JoinSpec(task.left_key, task.right_key, encoder=m.policy,
                            ngram_range=config.tfidf_ngram_range, minhash=config.minhash,
                            embedder=m.embedder)
            sw = sweep_thresholds(task.right, task.left, spec, task.gold)
            cells.append({"dataset": task.name, "setting": "join", "method": m.name,
                          "train_size": None, "metric": "f1", "mean": sw.best_f1, "stderr": 0.0,
                          "best_tau": sw.best_tau})
            curves += [{"dataset": task.name, "method": m.name, **c} for c in sw.curve]
    ranks, gains = _aggregate(cells, names, baseline, ("dataset",), None)
    return (BenchmarkReport(config.digest(), cells, gains, ranks, baseline or "", "f1",
                            {"rank_pooling": "rank per dataset; average over datasets"}),
            curves)


# ---------------------------------------------------------------------------
# suite files
# ---------------------------------------------------------------------------


def _method_from_json(doc: dict, config: PipelineConfig, cache: EmbeddingCache | None,
                      backends: dict) -> Method:
    emb = None
    if doc.get("policy", doc.get("encoder")) in ("embedding", "auto"):
        bdoc = doc.get("backend")
        bcfg = BackendConfig(**bdoc) if bdoc else config.backend
        key = json.dumps(bcfg.to_dict(), sort_keys=True)
        if key not in backends:
            backends[key] = make_backend(bcfg)
        emb = Embedder(backends[key], cache)
    return Method(doc["name"], doc.get("policy", doc.get("encoder", "minhash")), emb,
                  doc.get("learner", "gbdt"))


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def run_suite(suite_path, config: PipelineConfig, out_dir, cache: EmbeddingCache | None = None,
              backends: dict | None = None) -> dict:
    """Run a benchmark suite file and write reports plus plot-data CSVs to ``out_dir``.

    Returns backend call statistics (kept out of the reports so that reruns
    hitting the cache produce byte-identical reports).
    """
    suite_path = Path(suite_path)
    base = suite_path.parent
    suite = json.loads(suite_path.read_text(encoding="utf-8"))
    if suite.get("schema_version", 1) != 1:
        raise ValueError(f"unsupported suite schema_version {suite.get('schema_version')!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    backends = {} if backends is None else backends

    if suite.get("analytics"):
        tasks = [AnalyticsTask(t["name"], load_csv(_resolve(base, t["path"]), t.get("delimiter", ",")),
                               t["target"], t.get("group")) for t in suite["analytics"]]
        methods = [_method_from_json(m, config, cache, backends) for m in suite["methods"]]
        rep = run_analytics_benchmark(tasks, methods, config, suite.get("settings", SETTINGS),
                                      suite.get("baseline", "minhash"))
        (out / "analytics_report.json").write_text(rep.dumps(), encoding="utf-8")
        write_csv_rows(out / "analytics_ranks.csv", rep.mean_ranks,
                       ["method", "train_size", "mean_rank"])
        write_csv_rows(out / "analytics_cells.csv", rep.cells,
                       ["dataset", "setting", "method", "train_size", "mean", "stderr"])

    if suite.get("joins"):
        tasks = []
        for t in suite["joins"]:
            right = load_csv(_resolve(base, t["right"]))
            left = load_csv(_resolve(base, t["left"]))
            r_ids = right.column(t["right_id"]) if t.get("right_id") else [str(i) for i in range(right.n_rows)]
            l_ids = left.column(t["left_id"]) if t.get("left_id") else [str(i) for i in range(left.n_rows)]
            gold = load_gold(_resolve(base, t["gold"]), r_ids, l_ids)
            tasks.append(JoinTask(t["name"], right, left, t["right_key"], t["left_key"], gold))
        methods = [_method_from_json(m, config, cache, backends) for m in suite["join_methods"]]
        rep, curves = run_join_benchmark(tasks, methods, config, suite.get("join_baseline", "tfidf"))
        (out / "join_report.json").write_text(rep.dumps(), encoding="utf-8")
        write_csv_rows(out / "join_curves.csv", curves,
                       ["dataset", "method", "tau", "precision", "recall", "f1", "n_predicted"])
        write_csv_rows(out / "join_ranks.csv", rep.mean_ranks, ["method", "train_size", "mean_rank"])

    return {key: {"calls": b.calls, "texts_embedded": b.texts_embedded} for key, b in backends.items()}


def write_csv_rows(path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else r.get(c) for c in columns])
