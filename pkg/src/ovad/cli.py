"""Command-line entry point.

Subcommands:
    gen-synthetic  write a labeled synthetic dataset
    fit            fit density models + calibration on a train split
    score          score a test split with a fitted artifact
    evaluate       compare a score file against ground truth (JSON report,
                   per-clip TSV, optional figures)
    validate       check a dataset directory against the format contract

Exit codes: 0 success, 2 validation error, 3 artifact/dataset
compatibility error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from . import __version__, synthetic
from .config import load_config
from .dataset import load_dataset, load_ground_truth, read_scores, write_scores
from .errors import CompatibilityError, OvadError, ValidationError
from .evaluation import evaluate as evaluate_scores
from .pipeline import fit, load_artifact, save_artifact, score

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_COMPATIBILITY = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--profile", default="default", help="named config profile (default|ped2-like)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for feature extraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ovad",
                                     description="Object-level video anomaly detection engine")
    parser.add_argument("--version", action="version", version=f"ovad {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a labeled synthetic dataset")
    p.add_argument("--out", type=Path, required=True, help="dataset root to create")
    p.add_argument("--config", type=Path, default=None, help="JSON file of synthetic generator settings")
    p.add_argument("--seed", type=int, default=None, help="override the generator seed")

    p = sub.add_parser("fit", help="fit models on the train split")
    p.add_argument("--dataset", type=Path, required=True, help="dataset root")
    p.add_argument("--artifact", type=Path, required=True, help="output artifact directory")
    _add_common(p)

    p = sub.add_parser("score", help="score the test split with a fitted artifact")
    p.add_argument("--dataset", type=Path, required=True, help="dataset root")
    p.add_argument("--artifact", type=Path, required=True, help="fitted artifact directory")
    p.add_argument("--out", type=Path, required=True, help="output scores TSV")
    p.add_argument("--threads", type=int, default=1, help="worker threads for feature extraction")

    p = sub.add_parser("evaluate", help="evaluate a scores file against ground truth")
    p.add_argument("--dataset", type=Path, required=True, help="dataset root (test split labels)")
    p.add_argument("--scores", type=Path, required=True, help="scores TSV from `ovad score`")
    p.add_argument("--out", type=Path, default=None, help="report directory (JSON + TSV + figures)")
    p.add_argument("--no-figures", action="store_true", help="skip rendering PNG figures")

    p = sub.add_parser("validate", help="validate a dataset directory")
    p.add_argument("--dataset", type=Path, required=True, help="dataset root")
    p.add_argument("--split", choices=("train", "test", "both"), default="both")
    return parser


def _cmd_gen_synthetic(args) -> int:
    if args.config is not None:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValidationError(f"synthetic config {args.config} must contain a JSON object")
        cfg = synthetic.config_from_json_dict(raw)
    else:
        cfg = synthetic.SynthConfig()
    if args.seed is not None:
        cfg = synthetic.config_from_json_dict({**synthetic.config_to_json_dict(cfg), "seed": args.seed})
    synthetic.generate(cfg, args.out)
    print(f"wrote synthetic dataset to {args.out}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    config = load_config(args.config, profile=args.profile)
    artifact = fit(args.dataset, config, threads=args.threads)
    save_artifact(artifact, args.artifact)
    print(f"fitted features {', '.join(config.features)}; artifact at {args.artifact}")
    return EXIT_OK


def _cmd_score(args) -> int:
    artifact = load_artifact(args.artifact)
    smoothed, _ = score(args.dataset, artifact, threads=args.threads)
    write_scores(smoothed, args.out)
    total = sum(len(v) for v in smoothed.values())
    print(f"scored {len(smoothed)} clips ({total} frames) -> {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    from .report import format_report_table, render_figures, write_per_clip_tsv

    scores_by_clip = read_scores(args.scores)
    test = load_dataset(args.dataset, "test", check_tensors=False)
    truth = load_ground_truth(args.dataset, test.manifest)
    report = evaluate_scores(scores_by_clip, truth.labels)
    print(format_report_table(report))
    if args.out is not None:
        out = Path(args.out)
        report.save(out / "report.json")
        write_per_clip_tsv(report, out / "per_clip.tsv")
        if not args.no_figures:
            written = render_figures(scores_by_clip, truth.labels, report, out / "figures")
            print(f"wrote report.json, per_clip.tsv, and {len(written)} figures to {out}")
        else:
            print(f"wrote report.json and per_clip.tsv to {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    splits = ("train", "test") if args.split == "both" else (args.split,)
    for split in splits:
        loaded = load_dataset(args.dataset, split)
        n_objects = sum(len(v) for v in loaded.objects_by_clip.values())
        print(f"{split}: OK ({len(loaded.manifest.clips)} clips, {n_objects} objects)")
        if split == "test":
            load_ground_truth(args.dataset, loaded.manifest)
            print("test labels: OK")
    return EXIT_OK


_HANDLERS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "fit": _cmd_fit,
    "score": _cmd_score,
    "evaluate": _cmd_evaluate,
    "validate": _cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except CompatibilityError as exc:
        print(f"compatibility error: {exc}", file=sys.stderr)
        return EXIT_COMPATIBILITY
    except (ValidationError, json.JSONDecodeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OvadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
