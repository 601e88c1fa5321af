"""
Command-line interface.

``ems-audit`` exposes every pipeline stage as a subcommand plus ``pipeline``,
which chains them in a work directory. Exit codes: 0 on success, 1 when a
stage fails, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from config import (
    PipelineConfig,
    debug_enabled,
    env_log_level,
    load_pipeline_config,
    validate_paths,
)

from . import __version__
from .artifacts import write_json
from .audit import AUDIT_LEVELS, default_protocol_rules, load_protocol_rules
from .benchmark import DEFAULT_ITERATIONS, benchmark_inference
from .errors import EmsAuditError
from .gazetteer import default_gazetteer, load_gazetteer
from .pipeline import (
    run_audit,
    run_eval,
    run_gen,
    run_label,
    run_pipeline,
    run_predict,
    run_preprocess,
    run_split,
    run_stats,
    run_train,
)
from .preprocess import normalize, tokenize
from .reporting import (
    REPORT_FORMATS,
    render_audit_report,
    render_entity_statistics,
    render_evaluation_report,
    write_report,
)
from .tagger import load_checkpoint

EPILOG = """
Examples:
  # Generate a synthetic corpus and run every stage in runs/demo
  ems-audit pipeline --config demo.yaml --seed 7

  # Individual stages
  ems-audit gen --output records.jsonl --gold gold.jsonl -n 500
  ems-audit preprocess --input records.jsonl --output tokens.jsonl
  ems-audit label --input tokens.jsonl --output labelled.jsonl
  ems-audit split --input labelled.jsonl --output-dir split/
  ems-audit train --train split/train.jsonl --dev split/dev.jsonl --model model.ckpt
  ems-audit predict --model model.ckpt --input split/test.jsonl --output pred.jsonl
  ems-audit eval --gold split/test.jsonl --pred pred.jsonl --mode strict
  ems-audit audit --records split/test.jsonl --pred pred.jsonl --level provider

  # Corpus statistics and model benchmark
  ems-audit stats --input labelled.jsonl
  ems-audit benchmark --model model.ckpt --text "12 lead ecg done, aspirin given"

  # Verbose or debug logging (or DEBUG=1, or EMS_AUDIT_LOG_LEVEL=INFO)
  ems-audit -v pipeline --config demo.yaml

Precedence: command-line flags > --config file > environment > defaults.
"""


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, metavar="YAML", help="Pipeline configuration file")
    parser.add_argument("--seed", type=int, help="Seed for every stochastic stage (default: 7)")


def _add_format(parser: argparse.ArgumentParser, default: str = "text") -> None:
    parser.add_argument(
        "--format",
        choices=REPORT_FORMATS,
        default=None,
        help=f"Report format printed to stdout (default: config or {default})",
    )
    parser.add_argument("--report", type=Path, help="Also write the report to this file")
    parser.add_argument("--json", type=Path, help="Also write a JSON report to this file")


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(
        prog="ems-audit",
        description="EMS clinical audit - weakly supervised NER over ambulance case reports",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--verbose", "-v", action="store_true", help="Show progress and informational messages"
    )
    parser.add_argument(
        "--quiet", action="store_true", help="Only show errors. Overrides --verbose and --debug"
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug logging with timestamps")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen", help="Generate a synthetic corpus with gold annotations")
    _add_common(p)
    p.add_argument("--output", type=Path, required=True, help="Record JSONL to write")
    p.add_argument("--gold", type=Path, required=True, help="Gold annotation JSONL to write")
    p.add_argument("-n", "--n-documents", type=int, help="Number of documents")
    p.add_argument("--misspelling-rate", type=float, help="Probability of a misspelled mention")

    p = sub.add_parser("preprocess", help="Validate, filter and tokenize case records")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--keep-symbols", default=None, help="Symbols kept in addition to %%")

    p = sub.add_parser("label", help="Weakly label tokenized records with the gazetteer")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--gazetteer", type=Path, help="Synonym file (default: packaged list)")
    p.add_argument("--overrides", type=Path, help="Tag correction patches to apply")
    p.add_argument("--max-edit-distance", type=int, help="Fuzzy match budget (default: 1)")

    p = sub.add_parser("split", help="Split rows into train/dev/test")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument(
        "--fractions", type=float, nargs=3, metavar=("TRAIN", "DEV", "TEST"), help="Split fractions"
    )

    p = sub.add_parser("train", help="Train the BiLSTM-CRF tagger")
    _add_common(p)
    p.add_argument("--train", type=Path, required=True, help="Labelled training JSONL")
    p.add_argument("--dev", type=Path, help="Labelled dev JSONL for early stopping")
    p.add_argument("--model", type=Path, required=True, help="Checkpoint to write")
    p.add_argument("--log", type=Path, help="Training log CSV to write")
    p.add_argument("--epochs", type=int, help="Maximum epochs")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)

    p = sub.add_parser("predict", help="Tag reports with a trained model")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("eval", help="Score predicted tags against gold tags")
    _add_common(p)
    p.add_argument("--gold", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True)
    p.add_argument("--mode", choices=("strict", "type", "both"), default="both")
    p.add_argument("--errors", action="store_true", help="Include per-entity errors in JSON output")
    _add_format(p)

    p = sub.add_parser("audit", help="Audit records against the protocol rules")
    _add_common(p)
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True, help="Predicted tags for the records")
    p.add_argument("--rules", type=Path, help="Protocol rules YAML (default: packaged table)")
    p.add_argument("--level", choices=AUDIT_LEVELS, default="system")
    _add_format(p)

    p = sub.add_parser("stats", help="Entity and vocabulary statistics of a labelled corpus")
    _add_common(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--json", type=Path, help="Also write statistics as JSON")

    p = sub.add_parser("benchmark", help="Model size and inference latency")
    _add_common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--text", required=True, help="Report text to tag")
    p.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)

    p = sub.add_parser("pipeline", help="Run every stage in a work directory")
    _add_common(p)
    p.add_argument("--work-dir", type=Path, help="Output directory (default: runs/default)")
    p.add_argument("--records", type=Path, help="Real case records instead of a synthetic corpus")
    p.add_argument("--gold", type=Path, help="Verified labels for dev/test of real records")
    p.add_argument("--gazetteer", type=Path)
    p.add_argument("--rules", type=Path)

    return parser.parse_args(argv)


def configure_logging(args: argparse.Namespace) -> None:
    """Set the root log level from flags and environment."""
    if args.quiet:
        logging.basicConfig(level=logging.ERROR, format="%(levelname)s - %(message)s", force=True)
        warnings.filterwarnings("ignore")
    elif args.debug or debug_enabled():
        logging.basicConfig(
            level=logging.DEBUG, format="%(asctime)s - %(levelname)s - %(message)s", force=True
        )
        logging.debug("🐛 Debug logging enabled")
    elif args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s - %(message)s", force=True)
    else:
        logging.basicConfig(level=env_log_level(), format="%(levelname)s - %(message)s", force=True)


def _config(args: argparse.Namespace) -> PipelineConfig:
    if args.config is not None:
        validate_paths([args.config])
    return load_pipeline_config(args.config).with_overrides(seed=args.seed)


def _gazetteer(path: Optional[Path], config: PipelineConfig):
    path = path or config.paths.gazetteer
    if path is None:
        return default_gazetteer(config.max_edit_distance)
    return load_gazetteer(path, config.max_edit_distance)


def _rules(path: Optional[Path], config: PipelineConfig):
    path = path or config.paths.rules
    return default_protocol_rules() if path is None else load_protocol_rules(path)


def _emit(text: str, args: argparse.Namespace) -> None:
    sys.stdout.write(text)
    if getattr(args, "report", None) is not None:
        write_report(text, args.report)


def run(args: argparse.Namespace) -> int:
    """Dispatch a parsed command; exceptions propagate to ``main``."""
    config = _config(args)
    progress = args.verbose and not args.quiet
    command = args.command

    if command == "gen":
        changes = {"n_documents": args.n_documents, "misspelling_rate": args.misspelling_rate}
        synth = replace(config.synth, **{k: v for k, v in changes.items() if v is not None})
        count = run_gen(synth, args.output, args.gold, _gazetteer(None, config), progress)
        print(f"Generated {count} records -> {args.output}, gold -> {args.gold}")

    elif command == "preprocess":
        validate_paths([args.input])
        symbols = config.extra_kept_symbols if args.keep_symbols is None else args.keep_symbols
        count = run_preprocess(args.input, args.output, symbols)
        print(f"Preprocessed {count} records -> {args.output}")

    elif command == "label":
        validate_paths([args.input, args.gazetteer, args.overrides])
        if args.max_edit_distance is not None:
            config = config.with_overrides(max_edit_distance=args.max_edit_distance)
        gaz = _gazetteer(args.gazetteer, config)
        count = run_label(args.input, args.output, gaz, args.overrides, progress)
        print(f"Labelled {count} records -> {args.output}")

    elif command == "split":
        validate_paths([args.input])
        fractions = tuple(args.fractions) if args.fractions else config.split_fractions
        paths = run_split(args.input, args.output_dir, fractions, config.seed)
        print("Wrote " + ", ".join(str(p) for p in paths.values()))

    elif command == "train":
        validate_paths([args.train, args.dev])
        changes = {
            "max_epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
        }
        hp = replace(config.hyperparams, **{k: v for k, v in changes.items() if v is not None})
        _, log = run_train(args.train, args.dev, args.model, hp, args.log, progress)
        print(
            f"Trained {len(log.epochs)} epochs; best epoch {log.best_epoch} "
            f"(dev loss {log.best_dev_loss:.4f}) -> {args.model}"
        )

    elif command == "predict":
        validate_paths([args.model, args.input])
        count = run_predict(args.model, args.input, args.output, config.extra_kept_symbols)
        print(f"Tagged {count} reports -> {args.output}")

    elif command == "eval":
        validate_paths([args.gold, args.pred])
        modes = ("strict", "type") if args.mode == "both" else (args.mode,)
        report = run_eval(args.gold, args.pred, modes)
        fmt = args.format or config.report_format
        _emit(render_evaluation_report(report, fmt, args.errors), args)
        if args.json is not None:
            write_json(args.json, report.to_dict(args.errors))

    elif command == "audit":
        validate_paths([args.records, args.pred, args.rules])
        reports = run_audit(args.records, args.pred, _rules(args.rules, config), (args.level,))
        report = reports[args.level]
        _emit(render_audit_report(report, args.format or config.report_format), args)
        if args.json is not None:
            write_json(args.json, report.to_dict())

    elif command == "stats":
        validate_paths([args.input])
        stats = run_stats(args.input)
        sys.stdout.write(render_entity_statistics(stats, "text"))
        if args.json is not None:
            write_json(args.json, stats.to_dict())

    elif command == "benchmark":
        validate_paths([args.model])
        model = load_checkpoint(args.model)
        tokens = tokenize(normalize(args.text, config.extra_kept_symbols))
        result = benchmark_inference(model, tokens, args.iterations, args.model)
        print(
            f"Parameters: {result.parameters}\n"
            f"Checkpoint size: {result.checkpoint_bytes / 1e6:.2f} MB\n"
            f"Inference ({result.tokens} tokens, {result.iterations} runs): "
            f"{result.mean_ms:.3f} ± {result.std_ms:.3f} ms"
        )

    elif command == "pipeline":
        config = config.with_overrides(
            work_dir=args.work_dir,
            records=args.records,
            gold=args.gold,
            gazetteer=args.gazetteer,
            rules=args.rules,
        )
        paths = config.paths
        validate_paths([paths.records, paths.gold, paths.gazetteer, paths.rules, paths.overrides])
        result = run_pipeline(
            config, _gazetteer(None, config), _rules(None, config), show_progress=progress
        )
        sys.stdout.write(render_evaluation_report(result.evaluation, "text"))
        print(f"\nArtifacts written to {paths.work_dir}")

    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    load_dotenv()
    try:
        args = parse_arguments(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args)
    try:
        return run(args)
    except (EmsAuditError, ValueError, OSError) as e:
        logging.debug("Stage failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
