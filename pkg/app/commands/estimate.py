"""``estimate``: Median-of-Means decision for one pair of rows."""

from __future__ import annotations

import argparse
from dataclasses import dataclass

from app.cli import CommandContext, add_run_arguments, command_config, emit_json, resolve_out
from app.errors import InvalidParamsError
from app.estimator import (
    DEFAULT_PAIR_BUDGET,
    EstimatorConfig,
    cluster_error,
    estimate_x,
    recover_partition,
)
from app.formatting import format_result
from app.io import load_instance
from app.model import ModelParams, make_rng, sample_instance


def build_parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog=prog, description="Decide whether two rows come from the same group"
    )
    add_run_arguments(p, "out", "budget")
    p.add_argument("--data", help="Instance stem written by gen (sampled from the seed when absent)")
    p.add_argument("-i", type=int, dest="i", help="First row (0-based, default 0)")
    p.add_argument("-j", type=int, dest="j", help="Second row (0-based, default 1)")
    return p


def estimator_config(cfg: dict) -> EstimatorConfig:
    return EstimatorConfig.theoretical(
        cfg["n"],
        cfg["K"],
        cfg["delta"],
        L=cfg.get("L"),
        M=cfg.get("M"),
        lam=cfg.get("lambda"),
        override_threshold=cfg.get("override_threshold"),
        robust=cfg.get("robust"),
    )


def run(ctx: CommandContext, ns: argparse.Namespace) -> int:
    for key in ("data", "i", "j"):
        if getattr(ns, key) is not None:
            ns.overrides = (ns.overrides or []) + [f"{key}={getattr(ns, key)}"]
    cfg = command_config(ns, "Estimate")
    seed = cfg.get("seed", 0)
    if cfg.get("data"):
        inst = load_instance(resolve_out(ctx, str(cfg["data"])))
        if (inst.params.n, inst.params.d, inst.params.K) != (cfg["n"], cfg["d"], cfg["K"]):
            raise InvalidParamsError("config (n, d, K) disagrees with the instance file")
    else:
        params = ModelParams(n=cfg["n"], d=cfg["d"], K=cfg["K"], delta=cfg["delta"])
        inst = sample_instance(params, make_rng(seed, 0))
    est = estimator_config(cfg)
    i, j = cfg.get("i", 0), cfg.get("j", 1)
    decision = estimate_x(inst, i, j, est, make_rng(seed, 1))

    result = decision.as_dict()
    result.update({"config": est.as_dict(), "seed": seed, "i": i, "j": j})
    if cfg.get("partition"):
        labels = recover_partition(inst, est, seed, budget=cfg.get("budget", DEFAULT_PAIR_BUDGET))
        result["partition"] = labels.tolist()
        result["cluster_err"] = cluster_error(labels, inst.partition(signed=True))
    ctx.console.print(format_result({k: v for k, v in result.items() if k != "partition"}))
    emit_json(ctx, result, ns.out)
    return 0


@dataclass
class _Command:
    name: str = "estimate"
    help: str = "Median-of-Means estimate of x for a pair of rows"
    build_parser = staticmethod(build_parser)
    run = staticmethod(run)


COMMAND = _Command()
