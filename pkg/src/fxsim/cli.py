"""Command-line interface: run scenarios, pair-compare presets, validate,
list presets. Exit codes: 0 completed, 2 validation failure, 3 internal
invariant violation."""

from __future__ import annotations

import argparse
import copy
import os
import sys
import tempfile

from .errors import InvariantViolation, ScenarioError, SimError
from .metrics import compare as compare_reports
from .runtime import execute
from .scenario import list_presets, validate_file


def _write_atomic(path: str, content: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".fxsim-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cmd_run(args: argparse.Namespace) -> int:
    build = validate_file(args.scenario, seed_override=args.seed)
    world = execute(build)
    _write_atomic(args.out, world.report.to_json())
    if args.trace:
        _write_atomic(args.trace, world.engine.handle.trace_text())
    print(world.report.to_text(), end="")
    return 0

def _cmd_compare(args: argparse.Namespace) -> int:
    presets = [p.strip() for p in args.presets.split(",")]
    if len(presets) != 2:
        print("compare needs exactly two presets (e.g. monolith,microservice)",
              file=sys.stderr)
        return 2
    build = validate_file(args.scenario, seed_override=args.seed)
    reports = []
    for preset in presets:
        variant = copy.deepcopy(build)
        if preset not in ("monolith", "microservice"):
            print(f"unknown preset {preset!r}", file=sys.stderr)
            return 2
        if preset != build.preset:
            raw = dict(build.raw)
            raw["preset"] = preset
            from .scenario import validate
            variant = validate(raw, seed_override=args.seed)
        reports.append(execute(variant).report)
    table = compare_reports(reports[0], reports[1])
    print(table.to_text(), end="")
    if args.out:
        import json
        _write_atomic(args.out, json.dumps(table.to_dict(), indent=2) + "\n")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    validate_file(args.scenario)
    print("ok")
    return 0


def _cmd_list_presets(_args: argparse.Namespace) -> int:
    print(list_presets())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxsim",
        description="Deterministic discrete-event simulator comparing monolithic "
                    "and microservice deployments of an FX trading core.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and write its report")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", required=True)
    run_p.add_argument("--trace", default=None)
    run_p.set_defaults(func=_cmd_run)

    cmp_p = sub.add_parser("compare", help="paired run of two presets, same "
                                           "workload, fault schedule and seed")
    cmp_p.add_argument("--scenario", required=True)
    cmp_p.add_argument("--presets", required=True)
    cmp_p.add_argument("--seed", type=int, default=None)
    cmp_p.add_argument("--out", default=None)
    cmp_p.set_defaults(func=_cmd_compare)

    val_p = sub.add_parser("validate", help="validate a scenario file")
    val_p.add_argument("scenario")
    val_p.set_defaults(func=_cmd_validate)

    lp_p = sub.add_parser("list-presets", help="describe the built-in presets")
    lp_p.set_defaults(func=_cmd_list_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for issue in exc.issues:
            print(str(issue), file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except SimError as exc:
        print(str(exc), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
