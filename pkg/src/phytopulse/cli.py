"""Command-line entry point: synth, extract, dtw, evaluate, compare."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation
from .dtw import DtwConfig, dissimilarity_matrix, load_matrix_csv, save_matrix_csv
from .features import FAMILY_DERIVED, FAMILY_PROPOSED, extract_features, save_features_csv
from .signals import load_dataset, save_dataset
from .synth import generate_dataset, load_synth_spec


def _write_run_config(target: Path, payload: dict) -> None:
    # Sidecar recording the effective configuration of a file-producing run.
    sidecar = target.with_name(target.name + ".run.json")
    with sidecar.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _cmd_synth(args) -> int:
    spec = load_synth_spec(args.config)
    dataset = generate_dataset(spec)
    out = Path(args.out)
    save_dataset(dataset, out)
    with open(args.config, "r", encoding="utf-8") as fh:
        spec_echo = json.load(fh)
    _write_run_config(out, {"subcommand": "synth", "spec": spec_echo})
    print(f"wrote {len(dataset)} profiles to {out}")
    return 0


def _cmd_extract(args) -> int:
    dataset = load_dataset(args.dataset)
    features = extract_features(dataset, args.family)
    out = Path(args.out)
    save_features_csv(features, out)
    _write_run_config(out, {"subcommand": "extract", "family": args.family})
    print(f"wrote {features.n}x{features.p} {args.family} feature matrix to {out}")
    return 0


def _cmd_dtw(args) -> int:
    dataset = load_dataset(args.dataset)
    config = DtwConfig(point_norm=args.norm, window=args.window)
    matrix = dissimilarity_matrix(dataset, config, workers=args.workers)
    out = Path(args.out)
    save_matrix_csv(matrix, out)
    _write_run_config(
        out,
        {"subcommand": "dtw", "norm": args.norm, "window": args.window, "workers": args.workers},
    )
    print(f"wrote {len(matrix.ids)}x{len(matrix.ids)} dissimilarity matrix to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    dataset = load_dataset(args.dataset)
    config = evaluation.load_eval_config(args.config)
    matrix = load_matrix_csv(args.matrix) if args.matrix else None
    report = evaluation.run_grid(dataset, config, workers=args.workers, matrix=matrix)
    out_dir = Path(args.out)
    tables = [{"kind": "accuracy", "family": fam} for fam in config.families]
    json_path, text_path = evaluation.render_report(report, tables, out_dir)
    with open(args.config, "r", encoding="utf-8") as fh:
        config_echo = json.load(fh)
    effective = {
        "subcommand": "evaluate",
        "config": config_echo,
        "workers": args.workers,
        "matrix_provided": bool(args.matrix),
    }
    with (out_dir / "effective_config.json").open("w", encoding="utf-8") as fh:
        json.dump(effective, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {json_path} and {text_path}")
    return 0


def _cmd_compare(args) -> int:
    report_path = Path(args.report) / "report.json"
    if not report_path.exists():
        raise FileNotFoundError(f"no report.json under {args.report}")
    with report_path.open("r", encoding="utf-8") as fh:
        report = evaluation.report_from_json(json.load(fh))
    text = evaluation._contingency_table_text(report, args.cell_a, args.cell_b, args.repeat)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phytopulse",
        description="Identify phytoplankton species from multichannel pulse-shape signals.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a species spec")
    p.add_argument("--config", required=True, help="synthesis spec (JSON)")
    p.add_argument("--out", required=True, help="output dataset (JSON-lines)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("extract", help="extract a feature family to CSV")
    p.add_argument("--dataset", required=True, help="input dataset (JSON-lines)")
    p.add_argument(
        "--family", required=True, choices=[FAMILY_DERIVED, FAMILY_PROPOSED],
        help="feature family to extract",
    )
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("dtw", help="compute the all-pairs dissimilarity matrix")
    p.add_argument("--dataset", required=True, help="input dataset (JSON-lines)")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--norm", choices=["l1", "l2"], default="l2", help="point norm")
    p.add_argument("--window", type=int, default=None, help="Sakoe-Chiba half-width in samples")
    p.add_argument("--workers", type=int, default=None, help="parallel workers")
    p.set_defaults(func=_cmd_dtw)

    p = sub.add_parser("evaluate", help="run the cross-validation grid")
    p.add_argument("--dataset", required=True, help="input dataset (JSON-lines)")
    p.add_argument("--config", required=True, help="evaluation config (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--matrix", default=None, help="reuse a dissimilarity matrix CSV")
    p.add_argument("--workers", type=int, default=None, help="parallel workers")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="contingency table of two grid cells")
    p.add_argument("--report", required=True, help="directory holding report.json")
    p.add_argument("--cell-a", required=True, help="first cell, e.g. dissimilarity/rf")
    p.add_argument("--cell-b", required=True, help="second cell, e.g. dissimilarity/knn")
    p.add_argument("--repeat", type=int, default=0, help="repeat index (0-based)")
    p.add_argument("--out", default=None, help="write the table here instead of stdout")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # single-line diagnostic contract for the CLI
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
