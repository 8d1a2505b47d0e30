"""Command-line interface: ``samlp extract|train|predict|explain|bench|synth``.

Exit codes: 0 success, 2 input or configuration error, 3 schema or artifact
compatibility error, 4 internal pipeline error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .artifact import ARTIFACT_FORMAT, ARTIFACT_SUFFIX, ModelArtifact, dumps
from .bench import (SyntheticSpec, load_corpus, permutation_check, scenario_combined, scenario_per_dataset,
                    synthetic_profiles, write_corpus)
from .config import load_config
from .errors import EmptyDatasetError, InputError, SamlpError, SchemaMismatchError, StageError
from .explain import (background_sample, explain_batch, plot_summary, summarize, write_explanations_csv,
                      write_explanations_json, write_summary_json)
from .features import FeatureMatrix, build_matrix, concat_matrices, extract_features, read_features_csv, \
    write_features_csv, SCHEMA_HASH
from .profiles import load_dataset, parse_timestamp, read_records
from .tuner import run_pipeline

log = logging.getLogger("samlp")

EXIT_OK, EXIT_INPUT, EXIT_SCHEMA, EXIT_INTERNAL = 0, 2, 3, 4


def _out(msg: str) -> None:
    print(msg, flush=True)


def _config(args):
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "k", "repetitions", "configs_per_family", "holdout_ratio", "jobs")}
    if getattr(args, "families", None):
        overrides["families"] = args.families.split(",")
    return load_config(getattr(args, "config", None), **overrides)


def _training_matrix(args) -> FeatureMatrix:
    if args.features:
        return concat_matrices([read_features_csv(p) for p in args.features]) if len(args.features) > 1 \
            else read_features_csv(args.features[0])
    if args.corpus:
        return concat_matrices([build_matrix(d) for d in load_corpus(args.corpus, args.api_version)])
    if args.records and args.labels and args.collection_date:
        return build_matrix(load_dataset(args.records, args.labels, args.collection_date, api_version=args.api_version))
    raise InputError("give --features, --corpus, or --records with --labels and --collection-date")


def cmd_extract(args) -> int:
    ds = load_dataset(args.records, args.labels, args.collection_date, args.name, args.api_version)
    matrix = build_matrix(ds)
    write_features_csv(matrix, args.out)
    counts = matrix.class_counts()
    _out(f"wrote {len(matrix)} rows ({counts[0]} human, {counts[1]} bot) to {args.out}")
    if ds.stats.dropped_unlabeled:
        _out(f"dropped {ds.stats.dropped_unlabeled} records without labels")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    matrix = _training_matrix(args)
    t0 = time.perf_counter()
    result = run_pipeline(matrix, cfg)
    out = Path(args.out)
    if out.suffix != ARTIFACT_SUFFIX:
        out = out.with_name(out.name + ARTIFACT_SUFFIX)
    result.artifact.save(out)
    report_path = Path(args.report) if args.report else out.with_suffix(".report.json")
    report_path.write_text(result.report.to_json() + "\n", encoding="utf-8")
    r = result.report
    _out(f"winner: {r.winner['family']} (cv F1 {r.winner['mean_f1']:.4f})")
    _out(f"selected features: {len(r.selection['selected_features'])}")
    _out(f"threshold: {r.threshold:.6g}")
    _out(f"test precision {r.test_precision:.4f} recall {r.test_recall:.4f} F1 {r.test_f1:.4f}")
    _out(f"artifact: {out} (sha256 {result.artifact.digest()[:16]})")
    _out(f"report: {report_path}")
    log.info("training took %.1f s", time.perf_counter() - t0)
    return EXIT_OK


def _records_matrix(args, artifact: ModelArtifact | None = None):
    collected = parse_timestamp(args.collection_date)
    profiles = read_records(args.records, args.api_version, collected)
    if not profiles:
        raise EmptyDatasetError(f"{args.records} contains no user objects")
    if artifact is not None:
        artifact.check_schema(SCHEMA_HASH)
    ids = [p.user_id for p in profiles]
    X = np.vstack([extract_features(p, collected).values for p in profiles])
    return ids, X


def cmd_predict(args) -> int:
    artifact = ModelArtifact.load(args.artifact)
    ids, X = _records_matrix(args, artifact)
    scores = artifact.scores(X)
    labels = scores >= artifact.threshold
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "score", "label"])
        for uid, s, lab in zip(ids, scores, labels):
            w.writerow([uid, repr(float(s)), "bot" if lab else "human"])
    _out(f"scored {len(ids)} users: {int(labels.sum())} bot, {int(len(ids) - labels.sum())} human -> {args.out}")
    return EXIT_OK


def cmd_explain(args) -> int:
    cfg = _config(args)
    artifact = ModelArtifact.load(args.artifact)
    ids, X = _records_matrix(args, artifact)
    if args.background:
        bg_matrix = read_features_csv(args.background)
        bg = background_sample(bg_matrix.X, cfg.shap_background, cfg.seed)
    else:
        bg = background_sample(X, cfg.shap_background, cfg.seed)
    if args.limit:
        ids, X = ids[:args.limit], X[:args.limit]
    mode = args.mode or cfg.shap_mode
    samples = args.samples or cfg.shap_samples
    expl = explain_batch(artifact, X, bg, mode, cfg.seed, samples, instance_ids=ids)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_explanations_json(expl, out / "explanations.json")
    write_explanations_csv(expl, out / "explanations.csv")
    summary = summarize(expl, args.top_k or cfg.top_k)
    write_summary_json(summary, out / "summary.json")
    plot_summary(summary, out / "summary.svg")
    gap = max(e.local_accuracy_gap for e in expl)
    _out(f"explained {len(expl)} instances ({expl[0].mode} mode, {len(expl[0].features)} features)")
    if expl[0].mode == "exact":
        _out(f"local accuracy: max |base + sum(phi) - score| = {gap:.3g} ({'PASS' if gap <= 1e-6 else 'FAIL'})")
    _out(f"top {len(summary.ranking)} features:")
    for rank, (name, v) in enumerate(summary.ranking, 1):
        _out(f"  {rank:>2}. {name:<28} {v:.6g}")
    _out(f"outputs in {out}")
    return EXIT_OK


def _synthetic_spec(args) -> SyntheticSpec:
    return SyntheticSpec(n_datasets=args.n_datasets, n_rows=args.n_rows, bot_ratio=args.bot_ratio,
                         overlap=args.overlap, seed=args.synthetic_seed)


def cmd_bench(args) -> int:
    cfg = _config(args)
    if args.corpus:
        datasets = [build_matrix(d) for d in load_corpus(args.corpus, args.api_version)]
    else:
        datasets = [build_matrix(d) for d in synthetic_profiles(_synthetic_spec(args))]
    t0 = time.perf_counter()
    if args.scenario == "per-dataset":
        report = scenario_per_dataset(datasets, cfg)
    else:
        report = scenario_combined(datasets, cfg)
    report.runtime_s = time.perf_counter() - t0
    paths = report.save(args.out_dir)
    extra = {"runtime_s": report.runtime_s}
    if args.permutation:
        check = permutation_check(concat_matrices(datasets), cfg, cfg.seed)
        Path(args.out_dir, f"permutation_{args.scenario}.json").write_text(dumps(check) + "\n", encoding="utf-8")
        _out(f"label permutation: test F1 {check['test_f1']:.4f} vs random scorer {check['random_scorer_f1']:.4f}")
    # wall-clock numbers live apart from the deterministic report
    Path(args.out_dir, f"timings_{args.scenario}.json").write_text(dumps(extra) + "\n", encoding="utf-8")
    _out(report.table())
    _out(f"report: {paths['json']}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = _synthetic_spec(args)
    out = write_corpus(synthetic_profiles(spec), args.out, args.api_version if args.api_version != "auto" else "v1")
    _out(f"wrote {spec.n_datasets} datasets of {spec.n_rows} users to {out}")
    return EXIT_OK


def _add_pipeline_flags(p):
    p.add_argument("--config", help="YAML file of pipeline settings; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int, help="folds for selection and tuning")
    p.add_argument("--repetitions", type=int, help="alpha-search repetitions")
    p.add_argument("--configs-per-family", type=int, dest="configs_per_family")
    p.add_argument("--holdout-ratio", type=float, dest="holdout_ratio")
    p.add_argument("--families", help="comma-separated subset of svm,random_forest,gbt")


def _add_synth_flags(p):
    p.add_argument("--n-datasets", type=int, default=9)
    p.add_argument("--n-rows", type=int, default=1000)
    p.add_argument("--bot-ratio", type=float, default=0.5)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--synthetic-seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samlp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"samlp {__version__} (artifact format {ARTIFACT_FORMAT})")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes (results do not depend on it)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    api = dict(choices=["auto", "v1", "v2"], default="auto", dest="api_version")

    p = sub.add_parser("extract", help="user objects + labels -> 49-feature CSV")
    p.add_argument("--records", required=True, help="JSON-Lines file of user objects")
    p.add_argument("--labels", required=True, help="CSV with columns user_id,label")
    p.add_argument("--collection-date", required=True, help="when the profiles were collected (ISO-8601)")
    p.add_argument("--out", required=True)
    p.add_argument("--name")
    p.add_argument("--api-version", **api)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="select features, tune, threshold, write a .samlp artifact")
    p.add_argument("--features", nargs="+", help="feature CSV(s) from 'extract'")
    p.add_argument("--corpus", help="corpus directory (one sub-directory per dataset)")
    p.add_argument("--records")
    p.add_argument("--labels")
    p.add_argument("--collection-date")
    p.add_argument("--api-version", **api)
    p.add_argument("--out", required=True, help="artifact path")
    p.add_argument("--report", help="report JSON path (default: next to the artifact)")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="offline scoring of user objects")
    p.add_argument("--artifact", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--collection-date", required=True)
    p.add_argument("--api-version", **api)
    p.add_argument("--out", required=True, help="CSV with user_id,score,label")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("explain", help="Shapley explanations and a top-k summary plot")
    p.add_argument("--artifact", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--collection-date", required=True)
    p.add_argument("--api-version", **api)
    p.add_argument("--background", help="feature CSV to draw background rows from (default: the records)")
    p.add_argument("--mode", choices=["auto", "exact", "sampled"])
    p.add_argument("--samples", type=int, help="permutations in sampled mode")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--limit", type=int, help="explain only the first N records")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("bench", help="per-dataset or combined benchmark")
    p.add_argument("--scenario", choices=["per-dataset", "combined"], required=True)
    p.add_argument("--corpus", help="corpus directory; default is the synthetic generator")
    p.add_argument("--api-version", **api)
    p.add_argument("--permutation", action="store_true", help="also run the label-permutation leakage check")
    p.add_argument("--out-dir", required=True)
    _add_pipeline_flags(p)
    _add_synth_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="write a synthetic corpus in the loader's layout")
    p.add_argument("--out", required=True)
    p.add_argument("--api-version", **api)
    _add_synth_flags(p)
    p.set_defaults(func=cmd_synth)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, SchemaMismatchError):
        return EXIT_SCHEMA
    if isinstance(exc, (InputError, FileNotFoundError, IsADirectoryError)):
        return EXIT_INPUT
    return EXIT_INTERNAL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SamlpError, OSError) as exc:
        code = _exit_code(exc)
        print(f"samlp {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
