"""``moments-check``: every registered closed form against its Monte Carlo oracle."""

from __future__ import annotations

import argparse
from dataclasses import dataclass

from app.cli import CommandContext, add_run_arguments, command_config, emit_json
from app.formatting import verdict_tag
from app.moments import FAIL
from app.oracle import default_suite, run_case


def build_parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog=prog, description="Check closed-form moments against Monte Carlo"
    )
    add_run_arguments(p, "trials", "out")
    p.add_argument(
        "--inject-bias",
        type=float,
        dest="inject_bias",
        help="Scale every closed form by 1 + BIAS (negative control)",
    )
    p.add_argument("--case", action="append", dest="suite", help="Run only cases with this prefix")
    return p


def run(ctx: CommandContext, ns: argparse.Namespace) -> int:
    overrides = [f"inject_bias={ns.inject_bias}"] if ns.inject_bias is not None else []
    ns.overrides = (ns.overrides or []) + overrides
    cfg = command_config(ns, "MomentsCheck")
    prefixes = ns.suite or cfg.get("suite")
    cases = default_suite(inject_bias=cfg.get("inject_bias", 0.0))
    if prefixes:
        cases = [c for c in cases if any(c.name.startswith(p) for p in prefixes)]
    seed = cfg.get("seed", 0)
    z = cfg.get("z", 3.0)

    reports = []
    for index, case in enumerate(cases):
        report = run_case(case, seed + index, trials=cfg.get("trials"), z=z)
        reports.append(report)
        ctx.console.print(
            f"{verdict_tag(report.verdict)} {case.name}: closed {report.closed_form:.6g}, "
            f"mc {report.mc_estimate:.6g} ± {report.mc_se:.2g}"
        )
    emit_json(ctx, {"seed": seed, "z": z, "cases": [r.as_dict() for r in reports]}, ns.out)
    return 1 if any(r.verdict == FAIL for r in reports) else 0


@dataclass
class _Command:
    name: str = "moments-check"
    help: str = "Closed-form moments against Monte Carlo"
    build_parser = staticmethod(build_parser)
    run = staticmethod(run)


COMMAND = _Command()
