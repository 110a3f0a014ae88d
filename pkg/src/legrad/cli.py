"""Command-line interface.

Subcommands: ``run``, ``variance-study``, ``ingest-idx``, ``print-config``.
Configuration comes from ``--config FILE``, then positional ``key=value``
overrides, then ``--key value`` flags (last wins).
"""

import argparse
import json
import sys
import warnings

import numpy as np

from .config import _FIELDS, format_config, from_mapping, _pairs
from .data import IdxFormatError, load_idx_pair
from .errors import ConfigError, DivergenceError
from .experiments import OUTPUT_ENV, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_DATA = 4


def _add_config_args(p):
    p.add_argument("--config", help="config file (key=value lines or JSON)")
    p.add_argument("overrides", nargs="*", metavar="key=value")
    for name in _FIELDS:
        flag = "--" + name.replace("_", "-")
        p.add_argument(flag, dest=f"opt_{name}", default=None, metavar=name.upper())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="legrad",
        description="Local expectation gradients for variational inference.",
        epilog=f"The output directory defaults to ${OUTPUT_ENV}, else ./legrad-output.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_config_args(sub.add_parser("run", help="run one experiment"))
    _add_config_args(sub.add_parser("variance-study", help="fixed-point gradient variance table"))
    _add_config_args(sub.add_parser("print-config", help="print the resolved config"))
    ing = sub.add_parser("ingest-idx", help="convert an IDX image/label pair to .npz")
    ing.add_argument("images")
    ing.add_argument("labels")
    ing.add_argument("output", help="destination .npz file")
    ing.add_argument("--classes", help="comma-separated labels to keep")
    ing.add_argument("--limit", type=int)
    ing.add_argument("--binarize", action="store_true")
    return parser


def collect_config(args, experiment=None):
    pairs = []
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            pairs.extend(_pairs(fh.read()))
    for token in args.overrides:
        if "=" not in token:
            raise ConfigError(f"expected key=value, got {token!r}")
        key, value = token.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    for name in _FIELDS:
        value = getattr(args, f"opt_{name}")
        if value is not None:
            pairs.append((name, value))
    if experiment is not None:
        pairs = [(k, v) for k, v in pairs if k != "experiment"] + [("experiment", experiment)]
    return from_mapping(pairs)


def _ingest(args):
    classes = [int(c) for c in args.classes.split(",")] if args.classes else None
    X, labels = load_idx_pair(args.images, args.labels, classes, args.limit, args.binarize)
    np.savez_compressed(args.output, images=X, labels=labels)
    print(f"wrote {X.shape[0]} examples with {X.shape[1]} pixels to {args.output}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "ingest-idx":
            _ingest(args)
            return EXIT_OK
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = collect_config(args, "variance-study" if args.command == "variance-study" else None)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        if args.command == "print-config":
            sys.stdout.write(format_config(cfg))
            return EXIT_OK
        manifest = run_experiment(cfg)
        print(json.dumps({k: manifest[k] for k in ("config_hash", "f_evaluations", "files")}))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (IdxFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
