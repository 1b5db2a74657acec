#!/usr/bin/env python3

# src/headmask/__main__.py

"""
headmask - Input-conditioned head masking for encoder-decoder summarizers.

Trains a small transformer summarizer and a token saliency tagger, measures
how masking individual encoder-decoder attention heads to salient source
tokens changes ROUGE, picks the heads to mask, and evaluates summaries.

Usage:
  headmask [GLOBAL OPTIONS] COMMAND [COMMAND OPTIONS]

Examples:
  # Whole pipeline from one config file
  headmask --config configs/demo.yaml run

  # One stage at a time
  headmask --config configs/demo.yaml gen-data
  headmask --config configs/demo.yaml train
  headmask --config configs/demo.yaml summarize --mode tagger
"""

import argparse
import logging
import sys
from typing import Any, Callable, Optional

import yaml

from .core.config import apply_overrides, load_config
from .core.errors import HeadmaskError
from .core.pipeline import Pipeline
from .core.schema import SummarizeMode
from .version import __version__

COMMANDS: dict[str, str] = {
    "gen-data": "Generate the synthetic corpus (or ingest data.corpus)",
    "train": "Train the summarizer",
    "train-tagger": "Train the saliency tagger on the summarizer's encoder",
    "tune-boundary": "Pick the tagger decision boundary on the validation split",
    "analyze-effect": "Measure per-head content-selection effect with oracle masks",
    "analyze-synergy": "Incremental masking curves per decoder layer",
    "analyze-focus": "Tally what each head attends to during decoding",
    "select-heads": "Greedy head selection under tagger masks",
    "summarize": "Decode the test split and write summaries",
    "evaluate": "ROUGE of unmasked, oracle-masked and tagger-masked decoding",
    "run": "Run the configured stage sequence",
    "sweep-data": "Retrain on growing training fractions and compare modes",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="headmask",
        description="headmask - Input-conditioned head masking for summarization",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  headmask --config configs/demo.yaml run
  headmask --config configs/demo.yaml --seed 7 --out-dir runs/seed7 train
  headmask --config configs/demo.yaml train-tagger --corpus other.jsonl
  headmask --config configs/demo.yaml evaluate --corpus other.jsonl
  headmask --config configs/demo.yaml summarize --mode oracle --mask-from mask.json
        """,
    )

    parser.add_argument("--config", type=str, default=None, help="YAML config file")
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument(
        "--threads", type=int, default=None, help="Worker threads (results do not depend on it)"
    )
    parser.add_argument("--out-dir", type=str, default=None, help="Override the artifact directory")

    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")

    parser.add_argument("--version", action="version", version=f"headmask {__version__}")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    commands = {name: sub.add_parser(name, help=text) for name, text in COMMANDS.items()}

    commands["train-tagger"].add_argument(
        "--corpus", type=str, default=None, help="Train the tagger on this corpus instead"
    )
    commands["tune-boundary"].add_argument(
        "--corpus", type=str, default=None, help="Tune on this corpus's validation split instead"
    )
    commands["evaluate"].add_argument(
        "--corpus", type=str, default=None, help="Evaluate on this corpus's test split instead"
    )
    commands["summarize"].add_argument(
        "--mode",
        type=str,
        choices=[m.value for m in SummarizeMode],
        default=SummarizeMode.TAGGER.value,
        help="Decoding mode (default: tagger)",
    )
    commands["summarize"].add_argument(
        "--mask-from",
        type=str,
        default=None,
        help='Mask config {"layer", "heads"} (default: selection.json)',
    )
    return parser


def configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def dispatch(pipeline: Pipeline, args: argparse.Namespace) -> dict[str, Any]:
    runners: dict[str, Callable[[], dict[str, Any]]] = {
        "train-tagger": lambda: pipeline.train_tagger(args.corpus),
        "tune-boundary": lambda: pipeline.tune_boundary(args.corpus),
        "evaluate": lambda: pipeline.evaluate(args.corpus),
        "summarize": lambda: pipeline.summarize(SummarizeMode(args.mode), args.mask_from),
    }
    if args.command == "run":
        return pipeline.run()
    return pipeline.run_stage(args.command, runners.get(args.command))


def main(argv: Optional[list[str]] = None) -> None:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)

    try:
        config = apply_overrides(load_config(args.config), args.seed, args.threads, args.out_dir)
        summary = dispatch(Pipeline(config), args)

        # Stage summaries go to stdout as YAML; artifacts are on disk
        print(
            yaml.dump(
                {args.command: summary},
                default_flow_style=False,
                sort_keys=False,
                allow_unicode=True,
            ),
            end="",
        )

    except HeadmaskError as e:
        where = f" [{e.stage}]" if e.stage else ""
        print(f"Error{where}: {e.message}", file=sys.stderr)
        sys.exit(e.exit_code)
    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        sys.exit(130)
    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
