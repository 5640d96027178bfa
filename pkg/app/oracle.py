"""Monte Carlo oracles for the closed-form moments, and the moment-check suite."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from app import moments
from app.errors import InvalidParamsError
from app.hermite import HermiteContext, labelings, psibar_batch, psibar_labeled_batch, psitilde_batch
from app.model import ModelParams, make_rng, sample_conditional, sample_instances, sample_means
from app.moments import MomentParams, MomentReport
from app.multigraph import Template, build_gstar

logger = logging.getLogger(__name__)

CHUNK = 20_000


def mean_and_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return float(values.mean()) if n else math.nan, math.inf
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(n))


def variance_and_se(values: np.ndarray) -> tuple[float, float]:
    """Sample variance with the delta-method standard error sqrt((m4 - s^4) / N)."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return math.nan, math.inf
    centred = values - values.mean()
    s2 = float(centred.var(ddof=1))
    m4 = float(np.mean(centred**4))
    return s2, math.sqrt(max(m4 - s2**2, 0.0) / n)


def _chunks(trials: int):
    for index, lo in enumerate(range(0, trials, CHUNK)):
        yield index, min(CHUNK, trials - lo)


def sample_statistic(
    params: ModelParams,
    trials: int,
    seed: int,
    statistic: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> np.ndarray:
    """Evaluate ``statistic(Y, x)`` on ``trials`` fresh instances, chunk by chunk."""
    out = []
    for index, size in _chunks(trials):
        batch = sample_instances(params, size, make_rng(seed, index))
        out.append(statistic(batch.Y, batch.x))
    return np.concatenate(out) if out else np.empty(0)


def _ctx(params: ModelParams) -> HermiteContext:
    return HermiteContext(delta=params.delta, K=params.K)


def mc_mean_psibar(t: Template, params: ModelParams, trials: int, seed: int, with_x: bool = False):
    ctx = _ctx(params)

    def stat(Y, x):
        values = psibar_batch(t, Y, ctx)
        return values * x if with_x else values

    return mean_and_se(sample_statistic(params, trials, seed, stat))


def mc_mean_x_psitilde(t: Template, params: ModelParams, trials: int, seed: int):
    ctx = _ctx(params)
    return mean_and_se(sample_statistic(params, trials, seed, lambda Y, x: x * psitilde_batch(t, Y, ctx)))


def mc_mean_psitilde(t: Template, params: ModelParams, trials: int, seed: int):
    ctx = _ctx(params)
    return mean_and_se(sample_statistic(params, trials, seed, lambda Y, x: psitilde_batch(t, Y, ctx)))


def mc_cross_labeled(
    t1: Template,
    pi1: Sequence[int],
    t2: Template,
    pi2: Sequence[int],
    params: ModelParams,
    trials: int,
    seed: int,
):
    ctx = _ctx(params)
    rows1 = np.asarray(pi1, dtype=np.int64)[None, :]
    rows2 = np.asarray(pi2, dtype=np.int64)[None, :]

    def stat(Y, x):
        return psibar_labeled_batch(t1, Y, rows1, ctx)[:, 0] * psibar_labeled_batch(t2, Y, rows2, ctx)[:, 0]

    return mean_and_se(sample_statistic(params, trials, seed, stat))


def mc_second_moment(t: Template, params: ModelParams, trials: int, seed: int):
    ctx = _ctx(params)
    return mean_and_se(sample_statistic(params, trials, seed, lambda Y, x: psibar_batch(t, Y, ctx) ** 2))


def mc_conditional_variances(L: int, M: int, params: ModelParams, trials: int, seed: int):
    """Variances of Psibar_{G*} with means, rows 1-2 (signs +1) and x held fixed."""
    if params.K < 2:
        raise InvalidParamsError("conditioning on x = 0 needs K >= 2")
    t = build_gstar(L, M)
    ctx = _ctx(params)
    mu = sample_means(params, make_rng(seed, 0))
    results = []
    for x, groups in ((0, (0, 1)), (1, (0, 0))):
        values = []
        for index, size in _chunks(trials):
            batch = sample_conditional(params, mu, groups, (1, 1), size, make_rng(seed, 1 + x, index))
            values.append(psibar_batch(t, batch.Y, ctx))
        results.append(variance_and_se(np.concatenate(values)))
    return results[0], results[1]


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentCase:
    name: str
    closed_form: Callable[[], float]
    estimate: Callable[[int, int], tuple[float, float]]
    trials: int = 200_000
    tags: tuple[str, ...] = field(default_factory=tuple)


def double_edge() -> Template:
    return Template.from_text("nodes 2\n1 2\n1 2\n")


def quadruple_edge() -> Template:
    return Template.from_text("nodes 2\n1 2\n1 2\n1 2\n1 2\n")


def degree2_path() -> Template:
    return Template.from_text("nodes 3\n1 3\n3 2\n")


def single_edge() -> Template:
    return Template.from_text("nodes 2\n1 2\n")


def _mean_case(name, t, p, kind, trials=200_000, bias=0.0):
    closed = {
        "mean_psibar": moments.mean_psibar,
        "mean_x_psibar": moments.mean_x_psibar,
        "mean_x_psitilde": moments.mean_x_psitilde,
        "second_moment_psibar": moments.second_moment_psibar,
    }[kind]
    estimate = {
        "mean_psibar": lambda n, s: mc_mean_psibar(t, p, n, s),
        "mean_x_psibar": lambda n, s: mc_mean_psibar(t, p, n, s, with_x=True),
        "mean_x_psitilde": lambda n, s: mc_mean_x_psitilde(t, p, n, s),
        "second_moment_psibar": lambda n, s: mc_second_moment(t, p, n, s),
    }[kind]
    return MomentCase(
        name=name,
        closed_form=lambda: closed(t, p) * (1.0 + bias),
        estimate=estimate,
        trials=trials,
        tags=(kind,),
    )


def default_suite(inject_bias: float = 0.0) -> list[MomentCase]:
    """Closed forms paired with their Monte Carlo oracles.

    ``inject_bias`` multiplies every closed form by ``1 + inject_bias``; a
    non-zero value is a negative control that must fail.
    """
    p_small = MomentParams(n=6, d=2, K=2, delta=1.0)
    p_strong = MomentParams(n=6, d=2, K=2, delta=1.5)
    p_cond = MomentParams(n=8, d=2, K=2, delta=1.5)
    gstar = build_gstar(1, 1)
    cases = [
        _mean_case("mean_psibar/double_edge", double_edge(), p_small, "mean_psibar", bias=inject_bias),
        _mean_case("mean_x_psibar/double_edge", double_edge(), p_small, "mean_x_psibar", bias=inject_bias),
        _mean_case("mean_x_psibar/gstar_1_1", gstar, p_small, "mean_x_psibar", bias=inject_bias),
        _mean_case("mean_x_psitilde/gstar_1_1", gstar, p_small, "mean_x_psitilde", bias=inject_bias),
        _mean_case("second_moment/double_edge", double_edge(), p_small, "second_moment_psibar", bias=inject_bias),
        _mean_case(
            "second_moment/quadruple_edge",
            quadruple_edge(),
            p_small,
            "second_moment_psibar",
            trials=400_000,
            bias=inject_bias,
        ),
        _mean_case("mean_psibar/gstar_1_1", gstar, p_strong, "mean_psibar", bias=inject_bias),
    ]

    t = double_edge()
    pi = (0, 1)
    cases.append(
        MomentCase(
            name="cross_labeled/double_edge",
            closed_form=lambda: moments.cross_moment_labeled(t, pi, t, pi, p_small) * (1.0 + inject_bias),
            estimate=lambda n, s: mc_cross_labeled(t, pi, t, pi, p_small, n, s),
            tags=("cross_moment_labeled",),
        )
    )
    g = build_gstar(1, 1)
    pi_a, pi_b = (0, 1, 2), (0, 1, 3)
    cases.append(
        MomentCase(
            name="cross_labeled/gstar_disjoint_rows",
            closed_form=lambda: moments.cross_moment_labeled(g, pi_a, g, pi_b, p_strong) * (1.0 + inject_bias),
            estimate=lambda n, s: mc_cross_labeled(g, pi_a, g, pi_b, p_strong, n, s),
            tags=("cross_moment_labeled",),
        )
    )
    for which in (0, 1):
        cases.append(
            MomentCase(
                name=f"conditional_variance/gstar_1_1/x={which}",
                closed_form=(
                    lambda which=which: moments.conditional_variances_gstar(1, 1, p_cond)[which]
                    * (1.0 + inject_bias)
                ),
                estimate=lambda n, s, which=which: mc_conditional_variances(1, 1, p_cond, n, s)[which],
                trials=200_000,
                tags=("conditional_variances_gstar",),
            )
        )
    return cases


def run_case(case: MomentCase, seed: int, trials: Optional[int] = None, z: float = 3.0) -> MomentReport:
    n = trials or case.trials
    closed = case.closed_form()
    estimate, se = case.estimate(n, seed)
    report = MomentReport(
        name=case.name,
        closed_form=closed,
        mc_estimate=estimate,
        mc_se=se,
        n_trials=n,
        z=z,
    )
    logger.info("%s: closed=%.6g mc=%.6g se=%.3g -> %s", case.name, closed, estimate, se, report.verdict)
    return report


__all__ = [
    "MomentCase",
    "mean_and_se",
    "variance_and_se",
    "sample_statistic",
    "mc_mean_psibar",
    "mc_mean_psitilde",
    "mc_mean_x_psitilde",
    "mc_cross_labeled",
    "mc_second_moment",
    "mc_conditional_variances",
    "double_edge",
    "quadruple_edge",
    "degree2_path",
    "single_edge",
    "default_suite",
    "run_case",
]
