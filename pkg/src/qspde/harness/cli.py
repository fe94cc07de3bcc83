"""Command line entry point.

    qspde simulate   --config FILE [--seed N] [--out DIR] [--replicas N]
    qspde decompose  (--config FILE | --from RUN_DIR) ...
    qspde regularity (--config FILE | --from RUN_DIR) ...
    qspde converge   --config FILE ...
    qspde checks     --config FILE ...
    qspde presets

Exit status: 0 when every enabled check passes, 1 when one fails (or the
run itself breaks down numerically), 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import SCHEMA, ConfigError, build, load_config, preset
from .experiment import COMMANDS, MissingArtifactsError, execute, load_artifacts, write_artifacts
from .scenarios import PRESETS

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qspde", description="Quasilinear SPDE experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        src = s.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", metavar="PATH", help="key = value config file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="use a named preset as the config")
        if name in ("decompose", "regularity"):
            src.add_argument("--from", dest="from_dir", metavar="RUN_DIR",
                             help="reuse the fields written by a previous simulate run")
        s.add_argument("--seed", type=int, help="override noise.seed")
        s.add_argument("--out", metavar="DIR", help="override output.dir")
        s.add_argument("--replicas", type=int, help="override replicas")
        s.add_argument("--workers", type=int, help="override run.workers")
    sub.add_parser("presets", help="list presets and config keys")
    return p


def _resolve(args):
    u_given = None
    if getattr(args, "from_dir", None):
        cfg, u_given = load_artifacts(args.from_dir)
        changes = {}
        if args.out:
            changes["output__dir"] = args.out
        if args.workers:
            changes["run__workers"] = args.workers
        if args.seed is not None or args.replicas is not None:
            raise ConfigError("--seed and --replicas cannot change a stored run; rerun simulate instead")
        return (cfg.override(**changes) if changes else cfg), u_given
    cfg = load_config(args.config) if args.config else preset(args.preset)
    changes = {}
    if args.seed is not None:
        changes["noise__seed"] = args.seed
    if args.replicas is not None:
        changes["replicas"] = args.replicas
    if args.out:
        changes["output__dir"] = args.out
    if args.workers:
        changes["run__workers"] = args.workers
    return (cfg.override(**changes) if changes else cfg), u_given


def _list_presets() -> int:
    print("presets:", ", ".join(sorted(PRESETS)))
    print("keys:")
    defaults = build({})
    for key in SCHEMA:
        print(f"  {key} = {defaults.to_text().split(key + ' = ', 1)[1].splitlines()[0]}")
    return EXIT_OK


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "presets":
        return _list_presets()
    try:
        cfg, u_given = _resolve(args)
        outcome = execute(cfg, args.command, u_given)
    except (ConfigError, MissingArtifactsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    path = write_artifacts(outcome, cfg["output.dir"])
    for name, v in outcome.verdicts.items():
        print(f"{'PASS' if v['passed'] else 'FAIL'}  {name}")
    print(f"wrote {path}")
    return EXIT_OK if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
