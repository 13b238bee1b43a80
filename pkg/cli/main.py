"""
Command-line entry point.

    slas run        --scenario case_study --policy slas --out out/
    slas compare    --scenario case_study --policy slas,mobil,nochange
    slas montecarlo --scenario case_study --runs 50 --policy slas,mobil --seed 7

Exit codes: 0 success, 1 collision or planner error, 2 unwritable output
directory, 3 invalid scenario, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import NoReturn, Optional, Sequence

from cli.config import get_settings
from cli.plots import write_plots
from cli.report import RunReport, write_summary
from slas_engine.data.scenario import ScenarioError, load_scenario
from slas_engine.models import Formulation, PolicyName, Scenario
from slas_engine.sim.episode import EpisodeLog, run_episode
from slas_engine.sim.montecarlo import monte_carlo
from slas_engine.sim.policies import make_policy

logger = logging.getLogger("cli")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_UNWRITABLE = 2
EXIT_BAD_SCENARIO = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _policies(raw: str) -> list[PolicyName]:
    try:
        return [PolicyName(name.strip()) for name in raw.split(",") if name.strip()]
    except ValueError as exc:
        choices = ", ".join(p.value for p in PolicyName)
        raise argparse.ArgumentTypeError(f"{exc}; choose from {choices}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="case_study", help="shipped name or JSON path")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE"
    )
    common.add_argument("--formulation", choices=[f.value for f in Formulation])
    common.add_argument("--eager-lane-constraints", action="store_true")
    common.add_argument("--budget-ms", type=float, default=None)
    common.add_argument("--trace", action="store_true", help="write the solver node trace")

    parser = _Parser(prog="slas", description="Speed and lane advisory simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="one episode")
    run.add_argument("--policy", type=_policies, default=[PolicyName.SLAS])

    compare = sub.add_parser("compare", parents=[common], help="several policies, one world")
    compare.add_argument(
        "--policy",
        type=_policies,
        default=[PolicyName.SLAS, PolicyName.MOBIL, PolicyName.NOCHANGE],
    )

    mc = sub.add_parser("montecarlo", parents=[common], help="randomised campaign")
    mc.add_argument("--policy", type=_policies, default=[PolicyName.SLAS, PolicyName.MOBIL])
    mc.add_argument("--runs", type=int, default=50)
    mc.add_argument("--workers", type=int, default=None)
    return parser


def _flag_overrides(args: argparse.Namespace) -> list[str]:
    out: list[str] = []
    if args.seed is not None:
        out.append(f"sim.seed={args.seed}")
    if args.formulation is not None:
        out.append(f"planner.formulation={json.dumps(args.formulation)}")
    if args.eager_lane_constraints:
        out.append("planner.lazy_lane_constraints=false")
    if args.budget_ms is not None:
        out.append(f"planner.time_limit={args.budget_ms / 1000.0}")
    return out + list(args.overrides)


def _prepare_out(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-test"
    probe.write_text("")
    probe.unlink()
    return out


def _episodes(
    scenario: Scenario, policies: Sequence[PolicyName], out: Path, trace: bool
) -> list[EpisodeLog]:
    logs = []
    for name in policies:
        trace_path = out / f"trace_{name.value}.log" if trace else None
        log = run_episode(scenario, make_policy(name, trace_path))
        stem = "episode" if len(policies) == 1 else f"episode_{name.value}"
        log.write(out, stem)
        logger.info(log.summary)
        logs.append(log)
    return logs


def _report(
    scenario: Scenario, policies: Sequence[PolicyName], args: argparse.Namespace, out: Path
) -> int:
    logs = _episodes(scenario, policies, out, args.trace)
    report = RunReport.from_logs(scenario, scenario.sim.seed, logs)
    report.artifacts.extend(write_plots(logs, out, scenario.road))
    report.artifacts.append(write_summary(out, report.to_dict()))
    print(report.summary)
    return EXIT_OK if report.ok else EXIT_RUN_FAILED


def cmd_run(scenario: Scenario, args: argparse.Namespace, out: Path) -> int:
    if len(args.policy) != 1:
        raise UsageError("run takes exactly one policy; use compare for several")
    return _report(scenario, args.policy, args, out)


def cmd_compare(scenario: Scenario, args: argparse.Namespace, out: Path) -> int:
    if len(args.policy) < 2:
        raise UsageError("compare needs at least two policies")
    return _report(scenario, args.policy, args, out)


def cmd_montecarlo(scenario: Scenario, args: argparse.Namespace, out: Path) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    workers = args.workers or get_settings().workers
    result = monte_carlo(
        scenario, n=args.runs, policies=args.policy, seed=scenario.sim.seed, workers=workers
    )
    flat = result.flat_table()
    flat.to_csv(out / "montecarlo.csv", index=False)
    result.runs.to_csv(out / "montecarlo_runs.csv", index=False)
    (out / "montecarlo.json").write_text(flat.to_json(orient="records", indent=2))
    write_summary(
        out,
        {
            "seed": result.seed,
            "runs": args.runs,
            "skipped": result.skipped,
            "scenario": scenario.model_dump(mode="json"),
            "table": json.loads(flat.to_json(orient="records")),
        },
    )
    print(result.summary)
    failed = bool(result.runs["collided"].any()) or bool(result.runs["planner_errors"].any())
    return EXIT_RUN_FAILED if failed else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=settings.log_level, format="%(levelname)-5.5s [%(name)s] %(message)s"
    )

    try:
        scenario = load_scenario(args.scenario, _flag_overrides(args))
    except ScenarioError as exc:
        print(f"slas: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_BAD_SCENARIO

    out_root = args.out if args.out is not None else settings.out_dir / args.command
    try:
        out = _prepare_out(out_root)
    except OSError as exc:
        print(f"slas: cannot write to {out_root}: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE

    print(f"seed: {scenario.sim.seed}")
    try:
        handler = {"run": cmd_run, "compare": cmd_compare, "montecarlo": cmd_montecarlo}
        return handler[args.command](scenario, args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"slas: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"slas: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE


if __name__ == "__main__":
    sys.exit(main())
