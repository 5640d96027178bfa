"""``baseline``: hierarchical and spectral clustering plus the spectral-vacuity diagnostics."""

from __future__ import annotations

import argparse
from dataclasses import dataclass

from app.baselines import (
    diagnostic_auc,
    gram_identity_gap,
    hierarchical_clustering,
    path_polynomial_diagnostic,
    spectral_clustering,
    spectral_project,
)
from app.cli import CommandContext, add_run_arguments, command_config, emit_json
from app.estimator import cluster_error
from app.formatting import format_result
from app.model import ModelParams, make_rng, sample_instance

DEFAULT_TRIALS = 2000
DEFAULT_LENGTH = 2


def build_parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog, description="Distance and spectral baselines")
    add_run_arguments(p, "trials", "out")
    p.add_argument("--linkage", choices=("single", "complete", "average"), help="Default: single")
    return p


def run(ctx: CommandContext, ns: argparse.Namespace) -> int:
    if ns.linkage is not None:
        ns.overrides = (ns.overrides or []) + [f"linkage={ns.linkage}"]
    cfg = command_config(ns, "Baseline")
    params = ModelParams(n=cfg["n"], d=cfg["d"], K=cfg["K"], delta=cfg["delta"])
    seed = cfg.get("seed", 0)
    method = cfg.get("linkage", "single")
    length = cfg.get("D", DEFAULT_LENGTH)

    inst = sample_instance(params, make_rng(seed, 0))
    truth = inst.partition(signed=True)
    groups = min(2 * params.K, params.n)
    projection = spectral_project(inst.Y, params.K)
    diag = diagnostic_auc(params, length, cfg.get("trials", DEFAULT_TRIALS), seed)

    result = {
        "params": params.as_dict(),
        "seed": seed,
        "linkage": method,
        "hc_err": cluster_error(hierarchical_clustering(inst.Y, groups, method), truth),
        "spectral_err": cluster_error(spectral_clustering(inst.Y, params.K, groups, method), truth),
        "spectral_rank": projection.rank,
        "spectral_padded": projection.padded,
        "gram_identity_gap": gram_identity_gap(inst.Y, params),
        "path_length": length,
        "path_polynomial": path_polynomial_diagnostic(inst.Y, length, diag.calibration),
        "path_calibration": diag.calibration,
        "path_auc": diag.auc,
        "path_auc_counts": [diag.n_pos, diag.n_neg],
    }
    ctx.console.print(format_result(result))
    emit_json(ctx, result, ns.out)
    return 0


@dataclass
class _Command:
    name: str = "baseline"
    help: str = "Hierarchical/spectral baselines and the path-polynomial diagnostic"
    build_parser = staticmethod(build_parser)
    run = staticmethod(run)


COMMAND = _Command()
