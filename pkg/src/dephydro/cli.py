"""Command-line front end: ``dephydro <experiment> [options]``.

Settings are applied in order: declared defaults, ``--config`` file,
``DEPHYDRO_SEED`` (master seed), then flags. Any declared key can be set
with ``--set section.key=value`` or, when its last component is unique,
with ``--key value`` (so ``riemann --lambda 1 --rho 0 --t 1 --grid 2001``).

Exit codes: 0 when every check passes, 1 when a check fails or output
cannot be written, 2 on usage or configuration errors (nothing is written).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from dephydro.config import ConfigError, load_file, parse_value, resolve_key
from dephydro.experiments import EXPERIMENTS, make_config, run_experiment

SEED_ENV = "DEPHYDRO_SEED"
SEED_KEY = "run.seed"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dephydro", description="Facilitated exclusion experiments and conservation-law checks.")
    sub = p.add_subparsers(dest="command", metavar="experiment")
    for kind, exp in EXPERIMENTS.items():
        s = sub.add_parser(kind, help=exp.summary, description=exp.summary)
        s.add_argument("--config", help="file of 'section.key = value' lines")
        s.add_argument("--out", help="output directory (default dephydro-out/<experiment>)")
        s.add_argument("--jobs", type=int, default=1, help="worker processes for replicas")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a declared key")
        s.add_argument("--quiet", action="store_true", help="print nothing but errors")
        s.add_argument("--show-config", action="store_true", help="print the resolved config and exit")
    return p


def _flag_overrides(extra: list[str], keys) -> dict:
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise ConfigError(f"unexpected argument {tok!r}")
        name, eq, val = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(f"option {tok} needs a value")
            val = extra[i + 1]
            i += 1
        out[resolve_key(name, keys)] = parse_value(val)
        i += 1
    return out


def resolve(argv) -> tuple:
    """Parse arguments into (config, args); raises ConfigError on any problem."""
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    if args.command is None:
        raise ConfigError("choose an experiment: " + ", ".join(EXPERIMENTS))
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    keys = EXPERIMENTS[args.command].defaults
    overrides = load_file(args.config) if args.config else {}
    seed = os.environ.get(SEED_ENV)
    if seed is not None and SEED_KEY in keys:
        try:
            overrides[SEED_KEY] = int(seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed!r}") from None
    for item in args.set:
        k, eq, v = item.partition("=")
        if not eq:
            raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
        overrides[resolve_key(k.strip(), keys)] = parse_value(v)
    overrides.update(_flag_overrides(extra, keys))
    return make_config(args.command, overrides), args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        _build_parser().print_help()
        return 0 if argv else 2
    try:
        cfg, args = resolve(argv)
    except SystemExit as exc:  # --help inside a subcommand
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"dephydro: error: {exc}", file=sys.stderr)
        return 2
    if args.show_config:
        sys.stdout.write(cfg.echo())
        return 0
    try:
        report = run_experiment(cfg, jobs=args.jobs)
    except ConfigError as exc:
        print(f"dephydro: error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or Path("dephydro-out") / cfg.kind)
    try:
        report.write(out, cfg.echo())
    except OSError as exc:
        print(f"dephydro: cannot write outputs to {out}: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        for line in report.summary_lines():
            print(line)
        print(f"{'PASSED' if report.passed else 'FAILED'}: {cfg.kind} -> {out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
