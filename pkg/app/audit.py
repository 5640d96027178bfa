"""Numerical audit of the lower-bound machinery.

The Gram matrix of the normalised Psitilde basis is estimated by Monte Carlo
over shared instances; the exact delta = 0 value and the envelope of the
cross moment are reported next to it. ``corr_contributions`` gives the
closed-form summands of the correlation bound.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from app.errors import CapacityError, InvalidParamsError, UnsupportedTemplateError
from app.hermite import HermiteContext, centering_constants, count_labelings, psitilde_batch
from app.moments import (
    Envelope,
    cross_moment_tilde_envelope,
    gram_at_zero_signal,
    mean_x_psitilde,
    variance_proxy,
)
from app.multigraph import Template, minimal_shadow
from app.oracle import sample_statistic

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 500_000_000


@dataclass(frozen=True)
class GramReport:
    templates: tuple[Template, ...]
    gram: np.ndarray
    se: np.ndarray
    zero_signal: np.ndarray
    envelope_center: np.ndarray
    envelope_radius: np.ndarray
    trials: int

    @property
    def max_off_diagonal(self) -> float:
        off = self.gram - np.diag(np.diag(self.gram))
        return float(np.abs(off).max()) if off.size else 0.0

    @property
    def max_diagonal_deviation(self) -> float:
        return float(np.abs(np.diag(self.gram) - 1.0).max()) if self.gram.size else 0.0

    @property
    def dominance_margin(self) -> float:
        """min_i (Gamma_ii - sum_{j != i} |Gamma_ij|)."""
        absolute = np.abs(self.gram)
        off = absolute.sum(axis=1) - np.diag(absolute)
        return float(np.min(np.diag(self.gram) - off))

    def envelope_contains(self) -> np.ndarray:
        """Per entry: does the MC value sit inside the envelope, widened by 3 SE?"""
        lower = self.envelope_center - self.envelope_radius - 3 * self.se
        upper = self.envelope_center + self.envelope_radius + 3 * self.se
        return (self.gram >= lower) & (self.gram <= upper)

    def as_dict(self) -> dict:
        return {
            "templates": [t.to_text() for t in self.templates],
            "gram": self.gram.tolist(),
            "se": self.se.tolist(),
            "zero_signal": self.zero_signal.tolist(),
            "envelope_center": _nan_to_none(self.envelope_center),
            "envelope_radius": _nan_to_none(self.envelope_radius),
            "trials": self.trials,
            "max_off_diagonal": self.max_off_diagonal,
            "max_diagonal_deviation": self.max_diagonal_deviation,
            "dominance_margin": self.dominance_margin,
        }


def _nan_to_none(a: np.ndarray) -> list:
    return [[None if math.isnan(v) else float(v) for v in row] for row in a]


def _envelope(t1: Template, t2: Template, p, scale: float) -> Envelope:
    try:
        env = cross_moment_tilde_envelope(t1, t2, p)
    except (UnsupportedTemplateError, CapacityError) as exc:
        logger.debug("no envelope for pair: %s", exc)
        return Envelope(math.nan, math.nan)
    return Envelope(env.center / scale, env.radius / scale)


def gram_matrix(
    templates: Sequence[Template],
    p,
    trials: int,
    seed: int,
    budget: int = DEFAULT_BUDGET,
) -> GramReport:
    """Gamma_{G1,G2} = E[Psitilde_G1 Psitilde_G2] / sqrt(V(G1) V(G2)) with standard errors."""
    templates = tuple(templates)
    if not templates:
        raise InvalidParamsError("gram matrix needs at least one template")
    if trials < 2:
        raise InvalidParamsError("gram matrix needs at least two trials")
    cost = trials * sum(count_labelings(t.num_nodes, p.n) for t in templates)
    logger.info("gram matrix: %d templates, %d trials, %d labelings", len(templates), trials, cost)
    if cost > budget:
        raise CapacityError("gram matrix labelings", cost, budget)

    ctx = HermiteContext(delta=p.delta, K=p.K)
    centering = [centering_constants(t, ctx, p.d) for t in templates]
    norms = np.sqrt([variance_proxy(t, p) for t in templates])

    def stat(Y, x):
        cols = [psitilde_batch(t, Y, ctx, c) for t, c in zip(templates, centering)]
        return np.stack(cols, axis=1) / norms

    values = sample_statistic(p, trials, seed, stat)
    products = values[:, :, None] * values[:, None, :]
    gram = products.mean(axis=0)
    se = products.std(axis=0, ddof=1) / math.sqrt(trials)

    m = len(templates)
    zero = np.empty((m, m))
    center = np.empty((m, m))
    radius = np.empty((m, m))
    for a in range(m):
        for b in range(a, m):
            zero[a, b] = zero[b, a] = gram_at_zero_signal(templates[a], templates[b], p)
            env = _envelope(templates[a], templates[b], p, norms[a] * norms[b])
            center[a, b] = center[b, a] = env.center
            radius[a, b] = radius[b, a] = env.radius
    return GramReport(
        templates=templates,
        gram=gram,
        se=se,
        zero_signal=zero,
        envelope_center=center,
        envelope_radius=radius,
        trials=trials,
    )


def eigen_bracket(gram: np.ndarray) -> tuple[float, float]:
    """Gershgorin bracket 1 -/+ max_i sum_j |Gamma - I|_ij on the spectrum."""
    gram = np.asarray(gram, dtype=float)
    if not np.all(np.isfinite(gram)):
        raise InvalidParamsError("gram matrix has non-finite entries")
    r = float(np.abs(gram - np.eye(gram.shape[0])).sum(axis=1).max()) if gram.size else 0.0
    return 1.0 - r, 1.0 + r


@dataclass(frozen=True)
class Contribution:
    template: Template
    value: Optional[float]
    reason: str = ""

    def as_dict(self) -> dict:
        return {"template": self.template.to_text(), "value": self.value, "reason": self.reason}


@dataclass(frozen=True)
class CorrReport:
    rows: tuple[Contribution, ...]
    K: int

    @property
    def total(self) -> float:
        return math.fsum(r.value for r in self.rows if r.value is not None)

    @property
    def reference(self) -> float:
        return 1.0 / self.K**2

    def as_dict(self) -> dict:
        return {
            "rows": [r.as_dict() for r in self.rows],
            "total": self.total,
            "reference": self.reference,
        }


def corr_contributions(templates: Sequence[Template], p) -> CorrReport:
    """[E(x Psitilde_G)]^2 / V(G) for each template."""
    rows = []
    for t in templates:
        try:
            value = mean_x_psitilde(t, p) ** 2 / variance_proxy(t, p)
        except UnsupportedTemplateError as exc:
            rows.append(Contribution(template=t, value=None, reason=str(exc)))
            continue
        rows.append(Contribution(template=t, value=value))
    return CorrReport(rows=tuple(rows), K=p.K)


@dataclass(frozen=True)
class ShadowCheck:
    checked: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def shadow_check(templates: Sequence[Template]) -> ShadowCheck:
    """m* = 0 exactly on the diagonal of a family of pairwise non-isomorphic templates."""
    violations = []
    checked = 0
    for a, t1 in enumerate(templates):
        for b in range(a, len(templates)):
            t2 = templates[b]
            m = minimal_shadow(t1, t2)
            checked += 1
            if (m == 0) != (a == b):
                violations.append((a, b, m))
    return ShadowCheck(checked=checked, violations=violations)


__all__ = [
    "GramReport",
    "gram_matrix",
    "eigen_bracket",
    "Contribution",
    "CorrReport",
    "corr_contributions",
    "ShadowCheck",
    "shadow_check",
]
