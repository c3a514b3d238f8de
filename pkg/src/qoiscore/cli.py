"""``qoi`` command line: train, assess, simulate, mc-validate, report.

Exit codes: 0 success, 1 internal error, 2 input or usage error,
3 model/train error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace

from . import __version__
from .assessor import assess_community, assess_with_model, read_report_csv, write_breakdown_csv, write_report_csv
from .classifier import (
    accuracy,
    analytic_class_errors,
    binomial_std_error,
    holdout_split,
    load_model,
    misclassification_rate_analytic,
    misclassification_rate_empirical,
    save_model,
    train,
)
from .config import load_config
from .errors import DegenerateCentroids, QoIError, TrainError
from .indicators import parse_reference, parse_samples, write_reference, write_samples
from .synth import default_scenario, load_scenario, scenario_to_dict, simulate

logger = logging.getLogger("qoiscore")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    seed: int | None
    inputs: dict = field(default_factory=dict)
    config_path: str | None = None
    outputs: dict = field(default_factory=dict)
    tool_version: str = __version__
    details: dict = field(default_factory=dict)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _read_reference(path):
    with open(path, encoding="utf-8") as fh:
        return parse_reference(fh)


def _read_batches(path):
    with open(path, encoding="utf-8") as fh:
        return parse_samples(fh)


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_train(args) -> int:
    config = load_config(args.config)
    mode = args.mode or config.mode
    reference = _read_reference(args.reference)
    fit_part, test_idx = holdout_split(reference, 0.1, args.seed)
    holdout_model = train(fit_part, mode, config.ridge)
    held = [reference.samples[i] for i in test_idx]
    acc = accuracy(holdout_model, held)
    model = train(reference, mode, config.ridge)
    save_model(model, args.out)
    details = {"holdout_accuracy": acc, "holdout_size": len(held), "train_size": len(reference)}
    if model.mode == "lda" and model.n_classes > 1:
        details["analytic_error"] = misclassification_rate_analytic(model)
    RunManifest(
        "train", args.seed, {"reference": args.reference}, args.config, {"model": args.out}, details=details
    ).write(args.out + ".manifest.json")
    print(f"classes: {model.n_classes}  features: {model.dim}  samples: {len(reference)}  mode: {model.mode}")
    print(f"holdout accuracy (90/10): {acc:.4f} on {len(held)} samples")
    if "analytic_error" in details:
        print(f"analytic misclassification rate: {details['analytic_error']:.6f}")
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_assess(args) -> int:
    config = load_config(args.config)
    if args.assessors is not None:
        config = replace(config, assessors=args.assessors)
    batches = _read_batches(args.batches)
    if not batches:
        raise UsageError(f"{args.batches}: no sample records")
    inputs = {"batches": args.batches}
    if args.reference:
        inputs["reference"] = args.reference
        reports = assess_community(_read_reference(args.reference), batches, config, args.seed)
    else:
        inputs["model"] = args.model
        if config.assessors != 1:
            raise UsageError("--assessors > 1 needs --reference (each assessor trains on its own view)")
        reports = assess_with_model(load_model(args.model), batches, config)

    out = _ensure_dir(args.out)
    report_path = os.path.join(out, "report.csv")
    breakdown_path = os.path.join(out, "breakdown.csv")
    with open(report_path, "w", encoding="utf-8", newline="") as fh:
        write_report_csv(reports, fh)
    with open(breakdown_path, "w", encoding="utf-8", newline="") as fh:
        write_breakdown_csv(reports, batches, fh)
    errors = {r.contributor_id: r.error for r in reports if r.error}
    warnings = {r.contributor_id: list(r.warnings) for r in reports if r.warnings}
    RunManifest(
        "assess", args.seed, inputs, args.config,
        {"report": report_path, "breakdown": breakdown_path},
        details={"assessors": config.assessors, "errors": errors, "warnings": warnings},
    ).write(os.path.join(out, "manifest.json"))
    flagged = [r.contributor_id for r in reports if r.free_rider]
    print(f"assessed {len(reports)} contributors; free-riding candidates: {', '.join(flagged) or 'none'}")
    for cid, err in errors.items():
        print(f"  {cid}: {err}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else default_scenario()
    reference, batches = simulate(scenario, args.seed)
    out = _ensure_dir(args.out)
    paths = {
        "reference": os.path.join(out, "reference.jsonl"),
        "batches": os.path.join(out, "batches.jsonl"),
        "scenario": os.path.join(out, "scenario.json"),
    }
    with open(paths["reference"], "w", encoding="utf-8") as fh:
        write_reference(reference, fh)
    with open(paths["batches"], "w", encoding="utf-8") as fh:
        write_samples(batches, fh)
    with open(paths["scenario"], "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=1)
        fh.write("\n")
    RunManifest(
        "simulate", args.seed, {"scenario": args.scenario}, None, paths,
        details={"contributors": {b.contributor_id: len(b) for b in batches}, "reference_size": len(reference)},
    ).write(os.path.join(out, "manifest.json"))
    print(f"reference: {len(reference)} samples, {len(reference.label_set)} classes -> {paths['reference']}")
    print(f"batches: {len(batches)} contributors -> {paths['batches']}")
    return EXIT_OK


def cmd_mc_validate(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    model = load_model(args.model)
    if model.mode != "lda":
        raise UsageError("mc-validate needs an lda-mode model")
    analytic_cls = analytic_class_errors(model)
    analytic = misclassification_rate_analytic(model)
    est = misclassification_rate_empirical(model, args.trials, args.seed)
    rows = []
    for k, label in enumerate(model.label_set.labels):
        n = est.class_trials[k]
        emp = est.class_errors[k] / n if n else float("nan")
        se = binomial_std_error(emp, n) if n else float("nan")
        rows.append((label, f"{model.priors[k]:.6f}", f"{analytic_cls[k]:.6f}", f"{emp:.6f}", f"{se:.6f}", n))
    rows.append(("ALL", "1.000000", f"{analytic:.6f}", f"{est.rate:.6f}", f"{est.std_error:.6f}", est.trials))
    header = ("class", "prior", "analytic", "empirical", "std_error", "trials")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    diff = abs(analytic - est.rate)
    sigmas = diff / est.std_error if est.std_error > 0 else float("inf") if diff else 0.0
    print(f"# |analytic - empirical| = {diff:.6f} ({sigmas:.2f} std-errors; within 3: {sigmas <= 3})")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        RunManifest(
            "mc-validate", args.seed, {"model": args.model}, None, {"table": args.out},
            details={"trials": args.trials, "analytic": analytic, "empirical": est.rate, "std_error": est.std_error},
        ).write(args.out + ".manifest.json")
    return EXIT_OK


REPORT_MODES = {
    "qoi-vs-volume": (("contributor", "contributor_id"), ("QoI", "QoI"), ("volume", "volume")),
    "per-metric": (("contributor", "contributor_id"), ("C", "C"), ("R", "R"), ("U", "U"), ("volume", "volume")),
}


def cmd_report(args) -> int:
    with open(args.report, encoding="utf-8", newline="") as fh:
        try:
            rows = read_report_csv(fh)
        except ValueError as exc:
            raise UsageError(f"{args.report}: {exc}") from None
    if not rows:
        raise UsageError(f"{args.report}: report has no rows")
    columns = REPORT_MODES[args.mode]
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([name for name, _ in columns])
        for row in sorted(rows, key=lambda r: int(r["rank_volume"] or 0)):
            writer.writerow([row[src] for _, src in columns])
    finally:
        if out is not sys.stdout:
            out.close()
    if args.out:
        RunManifest("report", None, {"report": args.report}, None, {"comparison": args.out},
                    details={"mode": args.mode}).write(args.out + ".manifest.json")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qoi", description="Quality-of-Indicators assessment")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier on a reference dataset")
    p.add_argument("reference")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0, help="seed for the holdout split")
    p.add_argument("--mode", choices=("lda", "euclidean"), help="override the configured classifier mode")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("assess", help="score a community's batches")
    p.add_argument("batches")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--reference")
    src.add_argument("--model")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0, help="seed for multi-assessor reference views")
    p.add_argument("--assessors", type=int)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("simulate", help="generate a synthetic reference and community")
    p.add_argument("scenario", nargs="?", help="scenario JSON (default: built-in 8-contributor scenario)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc-validate", help="compare analytic and Monte Carlo misclassification rates")
    p.add_argument("model")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the table to this CSV")
    p.set_defaults(func=cmd_mc_validate)

    p = sub.add_parser("report", help="side-by-side score comparison from a report CSV")
    p.add_argument("report")
    p.add_argument("--mode", choices=sorted(REPORT_MODES), default="qoi-vs-volume")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (TrainError, DegenerateCentroids) as exc:
        print(f"qoi {args.command}: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (QoIError, UsageError, OSError, ValueError) as exc:
        print(f"qoi {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
