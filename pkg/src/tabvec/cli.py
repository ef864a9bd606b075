"""Command-line entry point: profile | vectorize | analyze | join | bench."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import run_suite, stratified_subsample, write_csv_rows
from .config import POLICIES, SETTINGS, ConfigError, PipelineConfig
from .embeddings import BackendConfig, EmbeddingError
from .join import JoinSpec, evaluate_join, join, load_gold, sweep_thresholds
from .learners.validation import FoldError, cross_validate
from .ngrams import profile_table
from .pipeline import TableVectorizer, TabularModel, make_embedder
from .table import TableError, binarize_and_balance, load_csv

log = logging.getLogger("tabvec")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="PipelineConfig JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--backend", choices=("mock", "file", "http"), help="embedding backend kind")
    p.add_argument("--backend-path", help="vector file for the file backend")
    p.add_argument("--endpoint", help="base URL for the http backend")
    p.add_argument("--model", help="embedding model id")
    p.add_argument("--cache", help="embedding cache journal path")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tabvec", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("profile", help="unique character n-gram profile per column")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--columns", nargs="*")
    p.add_argument("--sample", type=int)
    p.add_argument("--threshold", type=int)

    p = sub.add_parser("vectorize", help="fit the column router and write a feature CSV")
    _common(p)
    p.add_argument("--input", required=True, help="training table")
    p.add_argument("--apply", help="table to transform (defaults to --input)")
    p.add_argument("--drop", nargs="*", default=[], help="columns to exclude, e.g. the target")
    p.add_argument("--encoder", choices=POLICIES)
    p.add_argument("--setting", choices=SETTINGS, default="text+numeric")

    p = sub.add_parser("analyze", help="cross-validated ROC-AUC of the default pipeline")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--group", help="group column for a grouped split")
    p.add_argument("--encoder", choices=POLICIES)
    p.add_argument("--train-size", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--setting", choices=SETTINGS, default="text+numeric")
    p.add_argument("--learner", choices=("gbdt", "voting", "stacking"), default="gbdt")

    p = sub.add_parser("join", help="many-to-one fuzzy join by nearest neighbor")
    _common(p)
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--left-key", required=True)
    p.add_argument("--right-key", required=True)
    p.add_argument("--left-id", help="id column of the left table (default: row number)")
    p.add_argument("--right-id", help="id column of the right table (default: row number)")
    p.add_argument("--encoder", choices=("tfidf", "minhash", "embedding"), default="tfidf")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--tau", type=float, default=None)
    g.add_argument("--sweep", action="store_true")
    p.add_argument("--gold", help="CSV of right_id,left_id; empty left_id = no match")
    p.add_argument("--plot-out", help="CSV path for the threshold curve (with --sweep)")

    p = sub.add_parser("bench", help="run a benchmark suite file")
    _common(p)
    p.add_argument("--suite", required=True)
    p.add_argument("--train-sizes", type=int, nargs="*")
    p.add_argument("--folds", type=int)
    return parser


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    over = {"seed": args.seed, "cache_path": args.cache}
    for name in ("folds",):
        over[name] = getattr(args, name, None)
    if getattr(args, "train_sizes", None):
        over["train_sizes"] = args.train_sizes
    if getattr(args, "encoder", None) in POLICIES and args.command != "join":
        over["text_encoder_policy"] = args.encoder
    b = cfg.backend
    if args.backend or args.backend_path or args.endpoint or args.model:
        b = BackendConfig(**{**b.__dict__,
                             **{k: v for k, v in (("kind", args.backend), ("path", args.backend_path),
                                                  ("endpoint", args.endpoint), ("model_id", args.model))
                                if v is not None}})
        over["backend"] = b
    return cfg.with_overrides(**over)


def _emit(args, payload: str) -> None:
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_profile(args, cfg: PipelineConfig) -> int:
    table = load_csv(args.input, args.delimiter)
    lo, hi = cfg.profile_ngram_range
    profiles = profile_table(table, cfg.seed, args.sample or cfg.profile_sample, lo, hi,
                             args.threshold or cfg.regime_threshold, args.columns or None)
    _emit(args, _dumps([p.to_dict() for p in profiles]))
    return EXIT_OK


def _needs_embedder(cfg: PipelineConfig) -> bool:
    return cfg.text_encoder_policy in ("auto", "embedding") or "embedding" in cfg.column_policies.values()


def cmd_vectorize(args, cfg: PipelineConfig) -> int:
    train = load_csv(args.input, args.delimiter)
    apply = load_csv(args.apply, args.delimiter) if args.apply else train
    train, apply = train.drop(*args.drop), apply.drop(*args.drop)
    emb = make_embedder(cfg) if _needs_embedder(cfg) else None
    vec = TableVectorizer(cfg, emb, args.setting).fit(train)
    fm = vec.transform(apply)
    X = fm.dense()
    out = Path(args.out) if args.out else None
    lines = [",".join(fm.col_names)] + [",".join(repr(float(v)) for v in row) for row in X]
    payload = "\n".join(lines) + "\n"
    if out:
        out.write_text(payload, encoding="utf-8")
        Path(str(out) + ".routes.json").write_text(_dumps([r.to_dict() for r in vec.routes]))
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_analyze(args, cfg: PipelineConfig) -> int:
    table = load_csv(args.input, args.delimiter)
    data = binarize_and_balance(table, args.target, cfg.seed, args.group)
    if args.train_size:
        data = stratified_subsample(data, args.train_size, cfg.seed)
    emb = make_embedder(cfg) if _needs_embedder(cfg) or args.learner != "gbdt" else None
    rep = cross_validate(data, lambda: TabularModel(cfg, emb, args.setting, args.learner),
                         folds=cfg.folds, seed=cfg.seed, method=cfg.text_encoder_policy)
    doc = rep.to_dict()
    doc["config_digest"] = cfg.digest()
    _emit(args, _dumps(doc))
    log.info("%s: ROC-AUC %.4f +/- %.4f", rep.method, rep.mean, rep.stderr)
    return EXIT_OK


def cmd_join(args, cfg: PipelineConfig) -> int:
    right = load_csv(args.right, args.delimiter)
    left = load_csv(args.left, args.delimiter)
    emb = make_embedder(cfg) if args.encoder == "embedding" else None
    spec = JoinSpec(args.left_key, args.right_key, args.encoder,
                    tau=0.5 if args.tau is None else args.tau,
                    ngram_range=cfg.tfidf_ngram_range, minhash=cfg.minhash, embedder=emb)
    r_ids = list(right.column(args.right_id)) if args.right_id else [str(i) for i in range(right.n_rows)]
    l_ids = list(left.column(args.left_id)) if args.left_id else [str(i) for i in range(left.n_rows)]
    gold = load_gold(args.gold, r_ids, l_ids) if args.gold else None
    if args.sweep:
        if gold is None:
            raise UsageError("--sweep needs --gold")
        sw = sweep_thresholds(right, left, spec, gold)
        spec.tau = sw.best_tau
        if args.plot_out:
            write_csv_rows(args.plot_out, sw.curve, ["tau", "precision", "recall", "f1", "n_predicted"])
    res = join(right, left, spec)
    doc = {
        "tau": res.tau,
        "encoder": args.encoder,
        "matches": [
            {"right_id": r_ids[i], "left_id": None if m is None else l_ids[m], "similarity": s}
            for i, (m, s) in enumerate(zip(res.matches, res.scores))
        ],
        "n_predicted": res.n_predicted,
    }
    if gold is not None:
        p, r, f = evaluate_join(res, gold)
        doc["metrics"] = {"precision": p, "recall": r, "f1": f}
    if args.sweep:
        doc["sweep"] = sw.to_dict()
    _emit(args, _dumps(doc))
    return EXIT_OK


def cmd_bench(args, cfg: PipelineConfig) -> int:
    if not args.out:
        raise UsageError("bench needs --out DIR")
    cache = None
    if cfg.cache_path:
        from .embeddings import cache_open

        cache = cache_open(cfg.cache_path)
    stats = run_suite(args.suite, cfg, args.out, cache)
    log.info("backend calls: %s", stats)
    (Path(args.out) / "run_stats.json").write_text(_dumps(stats), encoding="utf-8")
    return EXIT_OK


COMMANDS = {"profile": cmd_profile, "vectorize": cmd_vectorize, "analyze": cmd_analyze,
            "join": cmd_join, "bench": cmd_bench}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except ConfigError as exc:
        sys.stderr.write(f"tabvec: config error: {exc}\n")
        return EXIT_USAGE
    except (OSError, TableError, EmbeddingError, FoldError, ValueError, KeyError) as exc:
        sys.stderr.write(f"tabvec: error: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
