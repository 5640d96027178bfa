"""``audit``: Gram matrix of the normalised basis, its eigenvalue bracket and the correlation sum."""

from __future__ import annotations

import argparse
from dataclasses import dataclass

from app.audit import DEFAULT_BUDGET, corr_contributions, eigen_bracket, gram_matrix, shadow_check
from app.cli import CommandContext, add_run_arguments, command_config, emit_json
from app.formatting import format_result, ok_fail
from app.moments import MomentParams
from app.multigraph import enumerate_templates

DEFAULT_TRIALS = 2000
DEFAULT_SIZE = 2


def build_parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog, description="Audit the normalised Hermite basis")
    add_run_arguments(p, "trials", "out", "budget")
    p.add_argument("-D", type=int, dest="D", help="Largest template size (default 2)")
    return p


def run(ctx: CommandContext, ns: argparse.Namespace) -> int:
    if ns.D is not None:
        ns.overrides = (ns.overrides or []) + [f"D={ns.D}"]
    cfg = command_config(ns, "Audit")
    p = MomentParams(n=cfg["n"], d=cfg["d"], K=cfg["K"], delta=cfg["delta"])
    size = cfg.get("D", DEFAULT_SIZE)
    even = enumerate_templates(size, even_only=True)

    gram = gram_matrix(
        even,
        p,
        trials=cfg.get("trials", DEFAULT_TRIALS),
        seed=cfg.get("seed", 0),
        budget=cfg.get("budget", DEFAULT_BUDGET),
    )
    lower, upper = eigen_bracket(gram.gram)
    corr = corr_contributions(enumerate_templates(size), p)
    shadows = shadow_check(even)

    result = {
        "params": p.as_dict(),
        "D": size,
        "gram": gram.as_dict(),
        "inside_envelope": gram.envelope_contains().tolist(),
        "bracket": {"lower": lower, "upper": upper, "positive": lower > 0},
        "contributions": corr.as_dict(),
        "shadow_check": {"checked": shadows.checked, "violations": shadows.violations},
    }
    ctx.console.print(
        format_result(
            {
                "templates": len(even),
                "max_off_diagonal": gram.max_off_diagonal,
                "max_diagonal_deviation": gram.max_diagonal_deviation,
                "dominance_margin": gram.dominance_margin,
                "inside_envelope": f"{int(gram.envelope_contains().sum())}/{gram.gram.size}",
                "bracket": [lower, upper],
                "corr_total": corr.total,
                "corr_reference": corr.reference,
            }
        )
    )
    ctx.console.print(f"{ok_fail(shadows.ok)} minimal shadow vanishes exactly on the diagonal")
    emit_json(ctx, result, ns.out)
    return 0 if shadows.ok else 1


@dataclass
class _Command:
    name: str = "audit"
    help: str = "Gram matrix, eigenvalue bracket and correlation contributions"
    build_parser = staticmethod(build_parser)
    run = staticmethod(run)


COMMAND = _Command()
