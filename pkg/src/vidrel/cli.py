"""Command-line entry point: gen-data, train, eval, analyze-errors, dump-features.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
Log verbosity comes from the VIDREL_LOG environment variable (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, RunConfig, load_config
from .core.checkpoint import CheckpointError
from .core.tensor import NonFiniteError
from .data.annotations import AnnotationError
from .inference import VocabularyMismatch

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config(path) -> RunConfig:
    return load_config(path) if path else RunConfig().validate()


def cmd_gen_data(args):
    from .pipeline import gen_data
    manifest = gen_data(_config(args.config), args.out)
    print(json.dumps({"out": args.out, "novel_relations": manifest["novel_relations"],
                      "novel_objects": manifest["novel_objects"]}))


def cmd_train(args):
    from .pipeline import run_train
    cfg = _config(args.config)

    def progress(rec):
        logging.getLogger("vidrel.train").info(
            "step %d epoch %d total %.4f", rec["step"], rec["epoch"], rec["total"])

    manifest, result = run_train(cfg, args.data, args.out, progress=progress, evaluate_train=not args.no_eval)
    print(json.dumps({"steps": manifest.steps, "checkpoint_digest": manifest.checkpoint_digest,
                      "train_report": manifest.final_report}))
    if result.aborted:
        raise NonFiniteError(result.error)


def cmd_eval(args):
    from .pipeline import run_eval
    cfg = _config(args.config)
    report = run_eval(cfg, args.ckpt, args.data, args.split, args.report, subset=args.subset, dump_dir=args.dump)
    print(json.dumps(report.to_dict()))


def cmd_analyze_errors(args):
    from .pipeline import run_analyze
    cfg = _config(args.config)
    if args.split:
        cfg.eval.split = args.split
    print(json.dumps(run_analyze(cfg, args.ckpt, args.data, args.out, subset=args.subset)))


def cmd_dump_features(args):
    from .pipeline import run_dump_features
    n = run_dump_features(_config(args.config), args.ckpt, args.data, args.out, subset=args.subset)
    print(json.dumps({"records": n, "out": args.out}))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vidrel", description="Open-vocabulary video relation detection (desk scale)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic corpus")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train on the corpus' training split")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--no-eval", action="store_true", help="skip the training-set report")
    t.set_defaults(fn=cmd_train)

    subsets = ("train", "test", "all")
    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--config")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("novel", "all", "base"), default="all")
    e.add_argument("--subset", choices=subsets, default="test")
    e.add_argument("--report")
    e.add_argument("--dump", help="also write per-video prediction files here")
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("analyze-errors", help="object/relationship error statistics")
    a.add_argument("--config")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--split", choices=("novel", "all", "base"))
    a.add_argument("--subset", choices=subsets, default="test")
    a.add_argument("--out")
    a.set_defaults(fn=cmd_analyze_errors)

    f = sub.add_parser("dump-features", help="pre/post-enhancement features of GT-matched pairs")
    f.add_argument("--config")
    f.add_argument("--ckpt", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--subset", choices=subsets, default="test")
    f.add_argument("--out", required=True)
    f.set_defaults(fn=cmd_dump_features)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("VIDREL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.fn(args)
    except (ConfigError, UsageError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AnnotationError, CheckpointError, VocabularyMismatch, FileNotFoundError, KeyError,
            PermissionError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
