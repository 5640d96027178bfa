"""``sweep``: estimator and baselines over a (delta, n, ...) grid into a resumable CSV."""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

from app.cli import CommandContext, add_run_arguments, command_config, resolve_out
from app.errors import CapacityError
from app.sweep import run_sweep, sweep_tasks, task_cost

DEFAULT_TRIALS = 50
DEFAULT_BUDGET = 10_000_000_000


def build_parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog, description="Run the estimator over a parameter grid")
    add_run_arguments(p, "trials", "out", "budget", "threads")
    p.add_argument(
        "--timing",
        action="store_true",
        help="Fill runtime_ms (otherwise 0, so reruns are byte-identical)",
    )
    return p


def run(ctx: CommandContext, ns: argparse.Namespace) -> int:
    cfg = command_config(ns, "Sweep")
    tasks = sweep_tasks(
        base=cfg,
        grid=cfg["grid"],
        trials=cfg.get("trials", DEFAULT_TRIALS),
        seed=cfg.get("seed", 0),
        partition=bool(cfg.get("partition", False)),
        timing=ns.timing,
    )
    cost = sum(task_cost(t) for t in tasks)
    budget = cfg.get("budget", DEFAULT_BUDGET)
    ctx.console.print(f"[blue]sweep[/blue]: {len(tasks)} trials, about {cost:,} labelings")
    if cost > budget:
        raise CapacityError("sweep labelings", cost, budget)
    out = Path(resolve_out(ctx, ns.out or "sweep.csv"))
    added = run_sweep(tasks, out, threads=cfg.get("threads", 1))
    ctx.console.print(f"[green][OK][/green] {out} ({added} new rows, {len(tasks)} total)")
    return 0


@dataclass
class _Command:
    name: str = "sweep"
    help: str = "Estimator and baselines over a parameter grid (CSV)"
    build_parser = staticmethod(build_parser)
    run = staticmethod(run)


COMMAND = _Command()
