"""Command-line entry point: ``ecgilab <command> <config> [options]``.

Exit codes: 0 success, 2 invalid configuration or missing inputs, 3
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import EcgiError, ParameterError
from .pipeline import MissingArtifactError, Pipeline, StageError, summary_grid

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICS = 0, 2, 3
COMMANDS = ("simulate", "reconstruct", "postprocess", "evaluate", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecgilab", description="Desk-scale ECG imaging laboratory.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("config", help="TOML/JSON file, or a bundled scenario name (case1..case3)")
    p.add_argument("--seed", type=int, default=None, help="noise seed (overrides rng_seed)")
    p.add_argument("--workers", type=int, default=1, help="worker threads per stage")
    p.add_argument("--out-dir", default="runs", help="output root (default: runs)")
    p.add_argument("--epsilon", type=float, default=None, help="regularization weight")
    p.add_argument("--skip-simulate", action="store_true",
                   help="reuse forward artifacts already in the output directory")
    p.add_argument("--figures", action="store_true",
                   help="also render PNG figures during evaluation")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _exit_code(exc: BaseException) -> int:
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, (ParameterError, MissingArtifactError)):
        return EXIT_VALIDATION
    return EXIT_NUMERICS


def run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, epsilon=args.epsilon)
    if args.workers < 1:
        raise ParameterError(f"--workers must be >= 1, got {args.workers}")
    pipe = Pipeline(cfg, args.out_dir, workers=args.workers, figures=args.figures)
    if args.command == "simulate":
        pipe.simulate()
    elif args.command == "reconstruct":
        pipe.reconstruct(skip_simulate=args.skip_simulate)
    elif args.command == "postprocess":
        pipe.postprocess()
    elif args.command == "evaluate":
        pipe.evaluate()
    else:
        pipe.run(skip_simulate=args.skip_simulate)
    if pipe.metrics is not None:
        print(summary_grid(pipe.metrics))
        if pipe.block_jumps:
            print("# max adjacent AT jump across block sectors (ms)")
            print(json.dumps(pipe.block_jumps, sort_keys=True))
    print(f"manifest: {pipe.root / 'manifest.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ParameterError as exc:
        field = getattr(exc, "field", None)
        where = f" [field: {field}]" if field else ""
        print(f"error: invalid configuration{where}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EcgiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
