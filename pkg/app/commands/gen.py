"""``gen``: sample one instance and write it as CSV plus a JSON truth sidecar."""

from __future__ import annotations

import argparse
from dataclasses import dataclass, replace

from app.cli import CommandContext, add_run_arguments, command_config, resolve_out
from app.io import save_instance
from app.model import ModelParams, make_rng, sample_instance


def build_parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog, description="Sample an instance of the mixture")
    return add_run_arguments(p, "out")


def run(ctx: CommandContext, ns: argparse.Namespace) -> int:
    cfg = command_config(ns, "Gen")
    params = ModelParams(n=cfg["n"], d=cfg["d"], K=cfg["K"], delta=cfg["delta"])
    seed = cfg.get("seed", 0)
    # make_rng(seed, 0) is the instance stream of every command.
    inst = replace(sample_instance(params, make_rng(seed, 0)), seed=seed)
    csv_path, json_path = save_instance(inst, resolve_out(ctx, ns.out or "instance"))
    ctx.console.print(f"[green][OK][/green] {csv_path}")
    ctx.console.print(f"[green][OK][/green] {json_path}")
    return 0


@dataclass
class _Command:
    name: str = "gen"
    help: str = "Sample an instance (CSV of Y and JSON truth)"
    build_parser = staticmethod(build_parser)
    run = staticmethod(run)


COMMAND = _Command()
