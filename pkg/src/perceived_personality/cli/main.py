"""``perdyn`` command-line entry point.

Exit codes: 0 success, 2 validation or input error, 3 numeric or
degenerate error. Failures print a JSON object with ``error_class`` and ``message``
to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .. import analysis
from ..core import SessionTable, WindowConfig
from ..errors import NumericError, PerceivedPersonalityError
from ..io import (
    TRAIT_CSV_COLUMNS,
    discover_features,
    fmt,
    read_performance_csv,
    read_predictions_csv,
    read_ratings_csv,
    read_self_report_csv,
    read_trait_csv,
    write_csv,
    write_performance_csv,
    write_self_report_csv,
    write_trait_csv,
)
from .report import build_manifest, dump_csv, dump_json, envelope

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _write_report(report: dict, args, csv_header=None, csv_rows=None) -> None:
    if getattr(args, "format", "json") == "csv":
        _emit(dump_csv(csv_header, csv_rows), args.out)
        if args.out:
            Path(args.out + ".manifest.json").write_text(dump_json(report["manifest"]), encoding="utf-8")
    else:
        _emit(dump_json(report), args.out)


def _sidecar(path: str, manifest: dict) -> None:
    Path(path + ".manifest.json").write_text(dump_json(manifest), encoding="utf-8")


def cmd_synth(args) -> int:
    from ..synth import SynthConfig, gen_self_reports, gen_sessions

    cfg = SynthConfig(
        n_groups=args.n_groups,
        group_size=(args.min_group_size, args.max_group_size),
        session_length_s=args.session_length,
        snapshot_s=args.snapshot,
        sigma_between=args.sigma_between,
        sigma_within=args.sigma_within,
        sigma_time=args.sigma_time,
        ar_coefficient=args.ar,
        missing_fraction=args.missing_fraction,
        performance_noise_std=args.performance_noise,
        with_performance=args.performance_out is not None,
        tasks=tuple(t for t in (args.tasks or "").split(",") if t),
        sigma_task=args.sigma_task,
        seed=args.seed,
    )
    table = gen_sessions(cfg)
    write_trait_csv(table, args.out)
    config = asdict(cfg)
    config["group_size"] = list(cfg.group_size)
    config["tasks"] = list(cfg.tasks)
    _sidecar(args.out, build_manifest("synth", config, {}, cfg.seed))
    if args.performance_out:
        write_performance_csv(table.performance, args.performance_out)
    if args.self_report_out:
        write_self_report_csv(gen_self_reports(table, seed=cfg.seed + 1), args.self_report_out)
    return EXIT_OK


def cmd_cluster(args) -> int:
    table = read_trait_csv(args.trait_csv)
    config = {
        "traits": args.traits,
        "permutations": args.permutations,
        "by": args.by,
        "normalize_meta": args.normalize_meta,
        "bins": args.bins,
        "mode": args.mode,
    }
    results, warnings = analysis.cluster_analysis(
        table,
        traits=args.traits,
        n_permutations=args.permutations,
        seed=args.seed,
        by_task=args.by == "task",
        normalize_meta=args.normalize_meta,
        bins=args.bins,
        mode=args.mode,
    )
    manifest = build_manifest("cluster", config, {"trait_csv": args.trait_csv}, args.seed)
    report = envelope(manifest, results, warnings)
    rows = [
        [r["task"], r["traits"], r["n_groups"], r["n_observations"], r["permanova"]["f_observed"],
         r["permanova"]["p_value"], r["permanova"]["n_permutations"], r["summary"]]
        for r in results
    ]
    _write_report(report, args, ["task", "traits", "n_groups", "n_observations", "f", "p_value", "n_permutations", "summary"], rows)
    return EXIT_OK


def cmd_agreement(args) -> int:
    ratings = read_ratings_csv(args.ratings_csv)
    preds = read_predictions_csv(args.predictions_csv)
    results = analysis.agreement_analysis(
        ratings, preds, alpha=args.alpha, tost_mode=args.tost_mode, normalize_meta=args.normalize_meta
    )
    config = {"alpha": args.alpha, "tost_mode": args.tost_mode, "normalize_meta": args.normalize_meta}
    manifest = build_manifest(
        "agreement", config, {"ratings_csv": args.ratings_csv, "predictions_csv": args.predictions_csv}, None
    )
    report = envelope(manifest, results)
    rows = [
        [r["dependent_variable"], r["icc"]["icc"], r["bound"], r["equivalent_raters"], r["n_raters"]]
        for r in results
    ]
    _write_report(report, args, ["dependent_variable", "icc", "bound", "equivalent_raters", "n_raters"], rows)
    return EXIT_OK


def cmd_tasks(args) -> int:
    table = read_trait_csv(args.trait_csv)
    meta, results, warnings = analysis.tasks_analysis(
        table,
        level=args.level,
        posthoc=args.posthoc,
        sphericity_alpha=args.alpha,
        normalize_meta=args.normalize_meta,
    )
    config = {"level": args.level, "posthoc": args.posthoc, "alpha": args.alpha, "normalize_meta": args.normalize_meta}
    manifest = build_manifest("tasks", config, {"trait_csv": args.trait_csv}, None)
    report = envelope(manifest, results, warnings, design=meta)
    rows = [
        [r["dependent_variable"], r["anova"]["f"], r["anova"]["df1"], r["anova"]["df2"], r["anova"]["p_value"],
         r["gg_applied"], r.get("mauchly", {}).get("mauchly_w", ""), r.get("mauchly", {}).get("p_value", ""), r["summary"]]
        for r in results
    ]
    header = ["dependent_variable", "f", "df1", "df2", "p_value", "gg_applied", "mauchly_w", "mauchly_p", "summary"]
    _write_report(report, args, header, rows)
    return EXIT_OK


def cmd_predict(args) -> int:
    from ..predict import GbtConfig

    table = read_trait_csv(args.trait_csv)
    perf = read_performance_csv(args.performance_csv)
    table = SessionTable(table.rows, perf)
    self_reports = None
    if args.self_report_csv:
        self_reports = read_self_report_csv(args.self_report_csv, rescale=args.rescale_self_reports)
    cfg = GbtConfig(
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        learning_rate=args.learning_rate,
        min_samples_leaf=args.min_samples_leaf,
        seed=args.seed,
    )
    results = analysis.predict_analysis(table, self_reports, cfg, normalize_meta=args.normalize_meta)
    config = {"gbt": asdict(cfg), "normalize_meta": args.normalize_meta, "rescale_self_reports": args.rescale_self_reports}
    inputs = {"trait_csv": args.trait_csv, "performance_csv": args.performance_csv, "self_report_csv": args.self_report_csv}
    manifest = build_manifest("predict", config, inputs, args.seed)
    report = envelope(manifest, results)
    rows = [
        [r["source"], r["representation"], r["n_features"], r["loo"]["mse_mean"], r["loo"]["mse_spread"], r["loo"]["n_splits"]]
        for r in results
    ]
    _write_report(report, args, ["source", "representation", "n_features", "mse_mean", "mse_spread", "n_splits"], rows)
    return EXIT_OK


def cmd_traits(args) -> int:
    from ..xmodal import load_params

    cfg = WindowConfig(args.window, args.stride, args.snapshot)
    params = load_params(args.params)
    entries = discover_features(args.features_dir)
    pred_rows, snap_rows = analysis.traits_from_features(entries, params, cfg)

    def render(rows):
        return [[*r[:4], fmt(r[4]), *map(fmt, r[5:])] for r in rows]

    write_csv(args.out, TRAIT_CSV_COLUMNS, render(snap_rows))
    inputs = {"params": args.params}
    for e in entries:
        for m, path in e["files"].items():
            inputs[f"{e['session_id']}/{e['participant_id']}/{m}"] = path
    config = asdict(cfg)
    _sidecar(args.out, build_manifest("traits", config, inputs, None))
    if args.predictions_out:
        write_csv(args.predictions_out, TRAIT_CSV_COLUMNS, render(pred_rows))
    return EXIT_OK


def cmd_init_model(args) -> int:
    from ..xmodal import HyperConfig, init_params, save_params

    hyper = HyperConfig(d=args.d, heads=args.heads, layers=args.layers, seed=args.seed)
    dims = {"acoustic": args.acoustic_dim, "textual": args.textual_dim, "visual": args.visual_dim}
    save_params(init_params(dims, hyper), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perdyn", description="Perceived-personality dynamics analyses.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False, fmt_flag=True):
        p.add_argument("--out", help="output file (default: stdout)")
        if fmt_flag:
            p.add_argument("--format", choices=["json", "csv"], default="json")
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--normalize-meta", action="store_true", help="divide meta-traits by their trait count")

    p = sub.add_parser("synth", help="generate synthetic sessions as a trait-window CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--performance-out")
    p.add_argument("--self-report-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-groups", type=int, default=17)
    p.add_argument("--min-group-size", type=int, default=3)
    p.add_argument("--max-group-size", type=int, default=4)
    p.add_argument("--session-length", type=float, default=600.0)
    p.add_argument("--snapshot", type=float, default=30.0)
    p.add_argument("--sigma-between", type=float, default=0.1)
    p.add_argument("--sigma-within", type=float, default=0.05)
    p.add_argument("--sigma-time", type=float, default=0.02)
    p.add_argument("--sigma-task", type=float, default=0.0)
    p.add_argument("--ar", type=float, default=0.8)
    p.add_argument("--missing-fraction", type=float, default=0.0)
    p.add_argument("--performance-noise", type=float, default=1.0)
    p.add_argument("--tasks", help="comma-separated task labels")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster", help="PERMANOVA of group clustering per task")
    p.add_argument("trait_csv")
    p.add_argument("--traits", choices=["big5", "meta"], default="big5")
    p.add_argument("--permutations", type=int, default=10_000)
    p.add_argument("--by", choices=["task", "none"], default="task")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--mode", choices=["auto", "exact", "monte_carlo"], default="auto")
    common(p, seed=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("agreement", help="ICC(2,k) and model-vs-rater TOST")
    p.add_argument("ratings_csv")
    p.add_argument("predictions_csv")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--tost-mode", choices=["paired", "independent"], default="paired")
    common(p)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("tasks", help="repeated-measures ANOVA across tasks")
    p.add_argument("trait_csv")
    p.add_argument("--level", choices=["individual", "group"], default="individual")
    p.add_argument("--posthoc", choices=["welch", "paired"], required=True)
    p.add_argument("--alpha", type=float, default=0.05, help="Mauchly threshold for the GG correction")
    common(p)
    p.set_defaults(func=cmd_tasks)

    p = sub.add_parser("predict", help="LOO boosted-tree regression of group performance")
    p.add_argument("trait_csv")
    p.add_argument("performance_csv")
    p.add_argument("--self-report-csv")
    p.add_argument("--rescale-self-reports", action="store_true", help="min-max self-reports to [0, 1]")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    common(p, seed=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("traits", help="window features through the model into snapshots")
    p.add_argument("features_dir")
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--predictions-out", help="also write per-stride predictions")
    p.add_argument("--window", type=float, default=15.0)
    p.add_argument("--stride", type=float, default=1.0)
    p.add_argument("--snapshot", type=float, default=30.0)
    p.set_defaults(func=cmd_traits)

    p = sub.add_parser("init-model", help="write a seeded, untrained parameter file")
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--acoustic-dim", type=int, default=88)
    p.add_argument("--textual-dim", type=int, default=768)
    p.add_argument("--visual-dim", type=int, default=17)
    p.set_defaults(func=cmd_init_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        code, cls, msg = EXIT_NUMERIC, type(exc).__name__, str(exc)
    except (PerceivedPersonalityError, OSError) as exc:
        code, cls, msg = EXIT_VALIDATION, type(exc).__name__, str(exc)
    sys.stderr.write(json.dumps({"error_class": cls, "message": msg}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
