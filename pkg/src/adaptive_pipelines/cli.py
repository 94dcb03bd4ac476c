"""Command-line entry point: ``init``, ``optimize``, ``process``, ``report`` and ``scenario``."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .lifecycle import EXIT, CommandResult, cmd_init, cmd_optimize, cmd_process, cmd_report, cmd_scenario


class _Parser(argparse.ArgumentParser):
    # usage errors get their own exit status so they never collide with "file not found"
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT["usage"], f"{self.prog}: error: {message}\n")


def _globals(suppress: bool) -> argparse.ArgumentParser:
    # the subcommand copy uses SUPPRESS so it never overwrites a value given before the subcommand
    p = _Parser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--root", default=d("."), help="registry root directory (default: current directory)")
    p.add_argument("--config", default=d(None), help="project configuration JSON file")
    p.add_argument("--seed", type=int, default=d(None), help="seed overriding the scenario spec")
    p.add_argument("--format", choices=("text", "json"), default=d("text"))
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _globals(suppress=True)

    parser = _Parser(prog="adaptive-pipelines", description="Self-adapting data-preparation pipelines.",
                     parents=[_globals(suppress=False)])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", parents=[common], help="create a project from its first batch")
    p.add_argument("project")
    p.add_argument("batch", help="first batch (CSV)")

    p = sub.add_parser("optimize", parents=[common], help="compose the initial pipeline")
    p.add_argument("project")
    p.add_argument("--strategy", choices=("beam", "exhaustive"))
    p.add_argument("--width", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--best-practices", help="JSON file with a list of best practices")

    p = sub.add_parser("process", parents=[common], help="monitor, adapt and run a new batch")
    p.add_argument("project")
    p.add_argument("batch", help="new batch (CSV)")
    p.add_argument("--no-adapt", action="store_true", help="report changes but never write a new pipeline version")

    p = sub.add_parser("report", parents=[common], help="show stored profiles, changes and history")
    p.add_argument("project")
    p.add_argument("--batch", type=int)
    p.add_argument("--property")

    p = sub.add_parser("scenario", parents=[common], help="generate the synthetic eye-tracking scenario")
    p.add_argument("spec", help="scenario spec JSON file")
    p.add_argument("out_dir")
    return parser


def run(argv: Sequence[str] | None = None) -> CommandResult:
    return dispatch(build_parser().parse_args(argv))


def dispatch(args: argparse.Namespace) -> CommandResult:
    if args.command == "init":
        config = None
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as f:
                    config = json.load(f)
            except FileNotFoundError:
                return CommandResult("file-not-found", {"error": f"file not found: {args.config}"},
                                     [f"error: file not found: {args.config}"])
            except json.JSONDecodeError as exc:
                return CommandResult("invalid-input", {"error": f"config is not valid JSON: {exc}"},
                                     [f"error: config is not valid JSON: {exc}"])
        return cmd_init(args.root, args.project, args.batch, config)
    if args.command == "optimize":
        return cmd_optimize(args.root, args.project, args.strategy, args.budget, args.best_practices, args.width)
    if args.command == "process":
        return cmd_process(args.root, args.project, args.batch, no_adapt=args.no_adapt)
    if args.command == "report":
        return cmd_report(args.root, args.project, args.batch, args.property)
    return cmd_scenario(args.spec, args.out_dir, args.seed)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    result = dispatch(args)
    out = result.render(args.format)
    stream = sys.stderr if 0 < result.code < 10 and args.format == "text" else sys.stdout
    if out:
        print(out, file=stream)
    return result.code


if __name__ == "__main__":
    sys.exit(main())
