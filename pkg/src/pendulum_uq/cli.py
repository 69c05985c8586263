"""pendulum-uq command line: generate, train, evaluate, report, run.

Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 missing artifact.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import (ExperimentPlan, IntegrityError, MissingArtifactError, cmd_evaluate,
                         cmd_generate, cmd_report, cmd_run, cmd_train)
from .nn import NumericError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISSING = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pendulum-uq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("generate", "train", "evaluate", "report", "run"):
        sp = sub.add_parser(name)
        sp.add_argument("--out", required=True, type=Path, help="experiment output root")
        if name != "report":
            sp.add_argument("--plan", type=Path, help="plan file (JSON); default: built-in plan")
            sp.add_argument("--reduced", action="store_true", help="force the reduced-scale constants")
            sp.add_argument("--seed-offset", type=int, default=0)
        if name in ("train", "evaluate", "run"):
            sp.add_argument("--workers", type=int, default=1)
        if name in ("report", "run"):
            sp.add_argument("--render", action="store_true", help="also write SVG figures")
    return p


def _load_plan(args) -> ExperimentPlan:
    if args.plan is not None:
        if not args.plan.exists():
            raise UsageError(f"plan file {args.plan} does not exist")
        try:
            plan = ExperimentPlan.load(args.plan)
        except (ValueError, TypeError, KeyError) as e:
            raise UsageError(f"invalid plan {args.plan}: {e}") from e
    else:
        plan = ExperimentPlan(name="default")
    if args.reduced:
        plan.reduced_scale = True
    if args.seed_offset:
        plan = plan.with_seed_offset(args.seed_offset)
    return plan


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            figs = cmd_report(args.out, args.render)
            print(figs)
            return EXIT_OK
        plan = _load_plan(args)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        if args.command == "generate":
            print(cmd_generate(plan, args.out))
        elif args.command == "train":
            for b in cmd_train(plan, args.out / "data", args.out, args.workers):
                print(b)
        elif args.command == "evaluate":
            print(cmd_evaluate(plan, args.out / "data", args.out / "models", args.out, args.workers))
        else:
            print(cmd_run(plan, args.out, args.workers, args.render))
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MissingArtifactError, IntegrityError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
