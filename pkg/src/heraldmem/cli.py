"""Command-line scenario runner.

::

    heraldmem <scenario> [--config PATH] [--seed N] [--trials N] [--out DIR] [--format csv|json]
    heraldmem show-config [--config PATH]

Exit status: 0 on success, 1 on a usage error, 2 when the run itself
fails (bad config, estimator failure, unwritable output).
"""

import argparse
import json
import os
import sys

import tomli

from . import __version__
from .config import ConfigError, apply_overrides, emit_config, reference_config
from .report import emit_report, emit_report_json, plain
from .scenarios import SCENARIOS, ScenarioFailure, run_scenario

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
U64_MAX = 2 ** 64 - 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default; usage errors are 1 here
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64 - 1]")
    return v


def _positive(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("trial count must be >= 1")
    return v


def build_parser():
    p = _Parser(prog="heraldmem", description="Heralded single-atom memory scenarios.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="scenario", parser_class=_Parser)
    sub.required = True
    for name in SCENARIOS:
        s = sub.add_parser(name, help=f"run the {name} scenario")
        s.add_argument("--config", metavar="PATH",
                       help="TOML file; keys given there override the reference parameters")
        s.add_argument("--seed", type=_u64, default=0)
        s.add_argument("--trials", type=_positive, default=None,
                       help="trials per simulated point (scenario default if omitted)")
        s.add_argument("--out", metavar="DIR", default=None,
                       help="artifact directory (summary only on stdout if omitted)")
        s.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="format of scan tables")
    s = sub.add_parser("show-config", help="print the effective configuration as TOML")
    s.add_argument("--config", metavar="PATH")
    return p


def _load(path):
    cfg = reference_config()
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path} does not parse: {exc}") from None
    return apply_overrides(cfg, doc)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_artifacts(bundle, out, fmt="csv"):
    """Write scans, documents and both summaries below ``out``; returns the file names."""
    os.makedirs(out, exist_ok=True)
    names = []
    for key, scan in bundle.scans.items():
        if fmt == "csv":
            name = f"{key}.csv"
            _write(os.path.join(out, name), scan.to_csv())
        else:
            name = f"{key}.json"
            _write(os.path.join(out, name), json.dumps(plain(scan.to_dict()), indent=2) + "\n")
        names.append(name)
    for key, doc in bundle.documents.items():
        name = f"{key}.json"
        _write(os.path.join(out, name), json.dumps(plain(doc), indent=2) + "\n")
        names.append(name)
    _write(os.path.join(out, "summary.txt"), emit_report(bundle))
    _write(os.path.join(out, "summary.json"), emit_report_json(bundle))
    return names + ["summary.txt", "summary.json"]


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load(args.config)
        if args.command == "show-config":
            sys.stdout.write(emit_config(cfg))
            return EXIT_OK
        bundle = run_scenario(args.command, cfg, args.seed, args.trials)
        sys.stdout.write(emit_report(bundle))
        if args.out is not None:
            write_artifacts(bundle, args.out, args.format)
    except (ConfigError, ScenarioFailure) as exc:
        print(f"heraldmem: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"heraldmem: I/O failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
