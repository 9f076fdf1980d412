"""Command-line entry point: ``coughscreen <command> [options]``."""

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .balance import SmoteConfig
from .config import load_run_config
from .crossval import (SearchGrid, default_workers, evaluate_external, load_pipelines,
                       make_fold_plan, run_nested_cv, save_run)
from .dataset import CACHE_ENV, Corpus
from .errors import ConfigError, CoughScreenError
from .evaluation import write_report, write_roc_csv
from .features import FeatureConfig
from .models import ModelSpec
from .preprocess import TrimConfig
from .selection import sfs
from .synth import make_synthetic_corpus

log = logging.getLogger("coughscreen")

REPORT_COLUMNS = ("Specificity", "Sensitivity", "Accuracy", "AUC")
DEMO_REG_STRENGTHS = (0.1, 1.0, 10.0)


def _dump(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _trim(args, base=TrimConfig()):
    changes = {k: getattr(args, k) for k in ("margin_ms", "window_ms", "threshold_db")
               if getattr(args, k, None) is not None}
    return replace(base, **changes)


def _load(args):
    cfg = load_run_config(args.config)
    overrides = {"trim": _trim(args, cfg.trim)}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if getattr(args, "budget", None) is not None:
        overrides["budget"] = args.budget
    if args.cache_dir is not None:
        overrides["cache_dir"] = Path(args.cache_dir)
    return replace(cfg, **overrides)


def _corpus(manifest, cfg_or_trim, cache_dir=None):
    trim = getattr(cfg_or_trim, "trim", cfg_or_trim)
    cache = cache_dir if cache_dir is not None else getattr(cfg_or_trim, "cache_dir", None)
    return Corpus.from_manifest(manifest, trim, cache)


def _workers(value):
    return value if value else default_workers()


def _plan(corpus, J, K, seed, n_inner):
    return make_fold_plan([(p, corpus.labels[p]) for p in corpus.patient_ids], J, K, seed, n_inner)


def cmd_extract(args):
    cfg = _load(args)
    corpus = _corpus(cfg.manifest, cfg)
    configs = list(cfg.grid.feature_configs)
    if cfg.sfs.features is not None and cfg.sfs.features not in configs:
        configs.append(cfg.sfs.features)
    for fc in configs:
        corpus.features(fc)
    _dump({"patients": len(corpus), "coughs": len(corpus.clips),
           "feature_configs": [fc.label() for fc in configs],
           "cache_dir": None if corpus.cache_dir is None else str(corpus.cache_dir)})


def _train(corpus, grid, cfg_seed, J, K, n_inner, out_dir, smote, budget, workers):
    plan = _plan(corpus, J, K, cfg_seed, n_inner)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_nested_cv(corpus, grid, plan, seed=cfg_seed, smote_config=smote, budget=budget,
                           workers=_workers(workers), checkpoint=out / "checkpoint.jsonl")
    save_run(result, out, plan)
    return result


def _summary(result, out_dir):
    return {"mean": result.mean, "n_folds": len(result.folds), "output_dir": str(out_dir),
            "chosen": [f.chosen() for f in result.folds]}


def cmd_train(args):
    cfg = _load(args)
    corpus = _corpus(cfg.manifest, cfg)
    result = _train(corpus, cfg.grid, cfg.seed, cfg.J, cfg.K, cfg.n_inner, cfg.output_dir,
                    cfg.smote, cfg.budget, cfg.workers)
    _dump(_summary(result, cfg.output_dir))


def cmd_evaluate(args):
    pipelines = load_pipelines(args.run)
    corpus = _corpus(args.manifest, _trim(args), args.cache_dir)
    rep = evaluate_external(pipelines, corpus)
    out = Path(args.out) if args.out else Path(args.run)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "external_report.json", rep, manifest=str(args.manifest))
    write_roc_csv(out / "external_roc.csv", rep.roc)
    _dump({"auc": rep.auc, "sensitivity": rep.sensitivity, "specificity": rep.specificity,
           "accuracy": rep.accuracy, "n_patients": rep.n_patients})


def cmd_sfs(args):
    cfg = _load(args)
    corpus = _corpus(cfg.manifest, cfg)
    fc = cfg.sfs.features or cfg.grid.feature_configs[0]
    spec = cfg.sfs.model or cfg.grid.model_specs[0]
    res = sfs(corpus.features(fc), spec, max_dims=cfg.sfs.max_dims, seed=cfg.seed,
              score_function=cfg.sfs.score_function, K=cfg.sfs.K, n_splits=cfg.sfs.n_splits,
              smote_config=cfg.smote, workers=_workers(cfg.workers))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res.write_csv(out / "sfs.csv")
    _dump({"best_auc": res.best_auc, "best_subset": [res.dim_names[j] for j in res.best_subset],
           "order": [res.dim_names[j] for j in res.order], "csv": str(out / "sfs.csv")})


def _report_rows(source):
    src = Path(source)
    if src.is_dir():
        summary = json.loads((src / "summary.json").read_text())
        rows = [{"Fold": str(f["outer"]), "Specificity": f"{f['specificity']:.4f}",
                 "Sensitivity": f"{f['sensitivity']:.4f}", "Accuracy": f"{f['accuracy']:.4f}",
                 "AUC": f"{f['auc']:.4f}"} for f in summary["folds"]]
        m = summary["mean"]
        rows.append({"Fold": "mean", "Specificity": f"{m['specificity']:.4f}",
                     "Sensitivity": f"{m['sensitivity']:.4f}", "Accuracy": f"{m['accuracy']:.4f}",
                     "AUC": f"{m['auc']:.4f}"})
        return ["Fold", *REPORT_COLUMNS], rows
    with open(src, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = list(reader.fieldnames or [])
    missing = [c for c in REPORT_COLUMNS if c not in header]
    if missing:
        raise ConfigError(1, f"missing columns {missing}", str(src))
    lead = [c for c in header if c not in REPORT_COLUMNS]
    return lead + list(REPORT_COLUMNS), rows


def render_table(columns, rows, fmt="text"):
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        w.writerows([r[c] for c in columns] for r in rows)
        return buf.getvalue().rstrip("\n")
    if fmt == "markdown":
        lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
        lines += ["| " + " | ".join(r[c] for c in columns) + " |" for r in rows]
        return "\n".join(lines)
    widths = [max(len(c), *(len(r[c]) for r in rows)) if rows else len(c) for c in columns]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(r[c].ljust(w) for c, w in zip(columns, widths)) for r in rows]
    return "\n".join(line.rstrip() for line in lines)


def cmd_report(args):
    columns, rows = _report_rows(args.input)
    text = render_table(columns, rows, args.format)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)


def cmd_synth_demo(args):
    seed = 7 if args.seed is None else args.seed
    out = Path(args.out)
    manifest = make_synthetic_corpus(out / "corpus", seed)
    corpus = _corpus(manifest, _trim(args), args.cache_dir)
    fc = FeatureConfig(n_mfcc=13, frame_len=1024, n_segments=50)
    grid = SearchGrid((fc,), tuple(ModelSpec("LR", reg_strength=r) for r in DEMO_REG_STRENGTHS))
    result = _train(corpus, grid, seed, 12, 10, 4, out / "run", SmoteConfig(), None, args.workers)
    write_roc_csv(out / "roc.csv", result.pooled_roc())
    print(f"mean outer AUC: {result.mean_auc:.4f}")
    _dump(_summary(result, out / "run"))


def _add_common(p, config=True):
    if config:
        p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=None, help="seed for every random choice")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: available CPUs)")
    p.add_argument("--cache-dir", default=None,
                   help=f"feature cache directory (default: ${CACHE_ENV} or none)")
    p.add_argument("--margin-ms", type=float, default=None, help="silence trim margin")
    p.add_argument("--window-ms", type=float, default=None, help="silence trim window")
    p.add_argument("--threshold-db", type=float, default=None,
                   help="silence threshold relative to the loudest window")


def build_parser():
    parser = argparse.ArgumentParser(prog="coughscreen", description="Cough-audio screening pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", help="logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="fill the feature cache for every grid feature config")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="nested cross-validated grid search")
    _add_common(p)
    p.add_argument("--budget", type=int, default=None, help="evaluate at most this many grid points")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained run on an external manifest")
    _add_common(p, config=False)
    p.add_argument("--run", required=True, help="output directory of a train run")
    p.add_argument("--manifest", required=True, help="external manifest CSV")
    p.add_argument("--out", default=None, help="where to write the report (default: the run dir)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sfs", help="sequential forward search over feature dims")
    _add_common(p)
    p.set_defaults(func=cmd_sfs)

    p = sub.add_parser("report", help="render Specificity/Sensitivity/Accuracy/AUC tables")
    p.add_argument("input", help="results CSV or run directory")
    p.add_argument("--format", choices=("text", "markdown", "csv"), default="text")
    p.add_argument("--out", default=None, help="also write the table to this file")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth-demo", help="synthetic two-tone corpus through the whole pipeline")
    _add_common(p, config=False)
    p.add_argument("--out", default="synth-demo", help="output directory")
    p.set_defaults(func=cmd_synth_demo)
    return parser


def _error_record(exc):
    if isinstance(exc, CoughScreenError):
        return exc.to_record()
    if isinstance(exc, FileNotFoundError):
        return {"error": "file_not_found", "message": str(exc), "path": exc.filename}
    return {"error": type(exc).__name__, "message": str(exc)}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CoughScreenError, FileNotFoundError, OSError, ValueError) as exc:
        print(json.dumps(_error_record(exc), sort_keys=True), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
