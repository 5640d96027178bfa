"""Closed-form moments of the graph polynomials.

Every formula is accumulated exactly: rational coefficients (falling
factorials, powers of d and K) are kept as ``Fraction`` and powers of the
separation are tracked by their exponent in a ``DeltaSeries``. Conversion to
float happens once, in ``DeltaSeries.evaluate``.

The pairing sums all share one summand per pruned multigraph:

    delta^(2|E_delta|) * d^|Cyc| / K^(|V_delta| - |CC(G_delta)|)

which vanishes when the pruned multigraph has a node of odd degree.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from app.errors import (
    CapacityError,
    InvalidParamsError,
    MomentIdentityError,
    UnsupportedTemplateError,
)
from app.model import ModelParams
from app.multigraph import (
    MAX_MATCH_PAIR_STATES,
    V1,
    V2,
    GDeltaSummary,
    MatchPair,
    Template,
    automorphism_count,
    build_gstar,
    count_pairings,
    enumerate_matchings,
    is_full,
    iter_match_pairs,
    iter_pairings,
    prune,
)

logger = logging.getLogger(__name__)

MAX_GSTAR_NODES = 5


@dataclass(frozen=True)
class MomentParams(ModelParams):
    """Model parameters used by the closed forms (same fields and checks)."""

    def require_square(self, what: str) -> None:
        if self.d != self.K:
            raise InvalidParamsError(f"{what} needs d = K, got d={self.d}, K={self.K}")


class DeltaSeries:
    """Exact sum of ``coef * delta**(2 * exponent)`` with rational coefficients."""

    def __init__(self, terms: Optional[dict[int, Fraction]] = None):
        self.terms: dict[int, Fraction] = dict(terms or {})

    def add(self, exponent: int, coef: Fraction | int) -> None:
        if coef:
            self.terms[exponent] = self.terms.get(exponent, Fraction(0)) + Fraction(coef)

    def scaled(self, factor: Fraction | int) -> "DeltaSeries":
        return DeltaSeries({a: c * factor for a, c in self.terms.items() if c * factor})

    def evaluate(self, delta: float) -> float:
        delta2 = float(delta) ** 2
        return math.fsum(float(c) * delta2**a for a, c in self.terms.items())

    def __bool__(self) -> bool:
        return any(self.terms.values())

    def __repr__(self) -> str:
        return f"DeltaSeries({self.terms!r})"


def _single(exponent: int, coef: Fraction | int) -> DeltaSeries:
    s = DeltaSeries()
    s.add(exponent, coef)
    return s


def falling(n: int, k: int) -> int:
    """n! / (n - k)!, zero when k > n."""
    if k < 0:
        return 0
    return math.perm(n, k)


def pair_term(s: GDeltaSummary, p: ModelParams, k_shift: int = 0) -> tuple[int, Fraction]:
    """(delta^2 exponent, coefficient) of one matching/pairing summand."""
    if not s.even_degrees:
        return 0, Fraction(0)
    coef = Fraction(p.d**s.n_cyc, p.K ** (s.V_delta_size - s.n_cc - k_shift))
    return s.E_delta_size, coef


# ---------------------------------------------------------------------------
# First moments
# ---------------------------------------------------------------------------


def _first_moment_series(t: Template, p: ModelParams, num_components: int) -> DeltaSeries:
    if t.has_odd_degree:
        return DeltaSeries()
    if t.interior_degree2_nodes:
        if p.delta == 0 or p.d == p.K:
            return DeltaSeries()
        raise UnsupportedTemplateError(
            "mean with an interior degree-2 node is only known for d = K"
        )
    return _single(t.num_edges, Fraction(1, p.K ** (t.num_nodes - num_components)))


def labeled_mean_psibar(t: Template, p: ModelParams) -> float:
    """E[Psibar_{G, pi}] for a single labeling."""
    return _first_moment_series(t, p, t.num_components).evaluate(p.delta)


def mean_psibar_series(t: Template, p: ModelParams) -> DeltaSeries:
    base = _first_moment_series(t, p, t.num_components)
    return base.scaled(falling(p.n - 2, t.num_nodes - 2))


def mean_psibar(t: Template, p: ModelParams) -> float:
    """E[Psibar_G]: zero with an odd-degree node or an interior degree-2 node."""
    return mean_psibar_series(t, p).evaluate(p.delta)


def mean_x_psibar(t: Template, p: ModelParams) -> float:
    """E[x Psibar_G]; components are counted in G plus the edge (v1, v2)."""
    closed = t.with_edge(V1, V2)
    base = _first_moment_series(t, p, closed.num_components)
    return base.scaled(falling(p.n - 2, t.num_nodes - 2)).evaluate(p.delta)


def mean_x_psitilde(t: Template, p: ModelParams) -> float:
    """E[x Psitilde_G].

    Edgeless gives 1/K. A connected template whose interior nodes all have
    even degree at least 4 gives the first-moment formula times (1 - 1/K).
    Everything else gives 0.
    """
    if t.num_edges == 0:
        return 1.0 / p.K
    if not t.is_connected or t.has_odd_degree:
        return 0.0
    if t.interior_degree2_nodes:
        if p.delta == 0 or p.d == p.K:
            return 0.0
        raise UnsupportedTemplateError(
            "E[x Psitilde] with an interior degree-2 node is only known for d = K"
        )
    coef = Fraction(falling(p.n - 2, t.num_nodes - 2), p.K ** (t.num_nodes - 1))
    coef *= Fraction(p.K - 1, p.K)
    return _single(t.num_edges, coef).evaluate(p.delta)


def gstar_conditional_mean(t: Template, p: ModelParams, batch_size: Optional[int] = None, shrink: int = 1) -> float:
    """E[Psibar_G | x = 1] for a connected template with interior degrees >= 4.

    ``batch_size`` replaces n - 2 and ``shrink`` divides delta^2, matching a
    batch of split samples.
    """
    s = p.n - 2 if batch_size is None else batch_size
    coef = Fraction(falling(s, t.num_nodes - 2), shrink**t.num_edges * p.K ** (t.num_nodes - 2))
    return _single(t.num_edges, coef).evaluate(p.delta)


# ---------------------------------------------------------------------------
# Cross and second moments
# ---------------------------------------------------------------------------


def _induced_matching(t1: Template, pi1: Sequence[int], t2: Template, pi2: Sequence[int]):
    if pi1[V1] != 0 or pi2[V1] != 0 or pi1[V2] != 1 or pi2[V2] != 1:
        raise InvalidParamsError("labelings must send v1 to row 1 and v2 to row 2")
    for pi in (pi1, pi2):
        if len(set(pi)) != len(pi):
            raise InvalidParamsError(f"labeling {list(pi)} is not injective")
    where = {row: b for b, row in enumerate(pi2)}
    return tuple(sorted((a, where[row]) for a, row in enumerate(pi1) if row in where))


def _pairing_series(
    t1: Template,
    t2: Template,
    matching,
    p: ModelParams,
) -> DeltaSeries:
    total = DeltaSeries()
    for pairing in iter_pairings(t1, t2, matching):
        mp = prune(t1, t2, matching, pairing)
        exponent, coef = pair_term(mp.summary, p)
        total.add(exponent, coef)
    return total


def _guard_pairings(t1: Template, t2: Template, matching) -> None:
    count = count_pairings(t1, t2, matching)
    if count > MAX_MATCH_PAIR_STATES:
        raise CapacityError("half-edge pairings", count, MAX_MATCH_PAIR_STATES)


def cross_moment_labeled(
    t1: Template, pi1: Sequence[int], t2: Template, pi2: Sequence[int], p: ModelParams
) -> float:
    """E[Psibar_{G1, pi1} Psibar_{G2, pi2}] for templates without interior degree-2 nodes.

    The matching is the one induced by shared rows.
    """
    if t1.interior_degree2_nodes or t2.interior_degree2_nodes:
        raise UnsupportedTemplateError(
            "interior degree-2 nodes only admit the envelope; use cross_moment_envelope"
        )
    matching = _induced_matching(t1, pi1, t2, pi2)
    _guard_pairings(t1, t2, matching)
    return _pairing_series(t1, t2, matching, p).evaluate(p.delta)


@dataclass(frozen=True)
class Envelope:
    center: float
    radius: float

    @property
    def lower(self) -> float:
        return self.center - self.radius

    @property
    def upper(self) -> float:
        return self.center + self.radius

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


def _degree2_unpaired(t1: Template, t2: Template, mp: MatchPair) -> int:
    paired1 = {h for h, _ in mp.pairing}
    paired2 = {h for _, h in mp.pairing}
    count = sum(1 for v in t1.interior_degree2_nodes if not any(h in paired1 for h in t1.incident[v]))
    count += sum(1 for v in t2.interior_degree2_nodes if not any(h in paired2 for h in t2.incident[v]))
    return count


def cross_moment_envelope(
    t1: Template, pi1: Sequence[int], t2: Template, pi2: Sequence[int], p: ModelParams
) -> Envelope:
    """Centre and radius bracketing the labeled cross moment of even templates."""
    if t1.has_odd_degree or t2.has_odd_degree:
        if t1.has_odd_degree != t2.has_odd_degree:
            return Envelope(0.0, 0.0)
        raise UnsupportedTemplateError("the envelope is stated for even templates")
    matching = _induced_matching(t1, pi1, t2, pi2)
    used1 = {a for a, _ in matching}
    used2 = {b for _, b in matching}
    if not (set(t1.interior_degree2_nodes) <= used1 and set(t2.interior_degree2_nodes) <= used2):
        return Envelope(0.0, 0.0)
    _guard_pairings(t1, t2, matching)
    center = DeltaSeries()
    radius = DeltaSeries()
    for pairing in iter_pairings(t1, t2, matching):
        mp = prune(t1, t2, matching, pairing)
        exponent, coef = pair_term(mp.summary, p)
        if is_full(t1, t2, pairing):
            center.add(exponent, coef)
        else:
            radius.add(exponent, coef * 2 ** _degree2_unpaired(t1, t2, mp))
    return Envelope(center.evaluate(p.delta), radius.evaluate(p.delta))


def second_moment_series(t: Template, p: ModelParams) -> DeltaSeries:
    total = DeltaSeries()
    for _, _, mp in iter_match_pairs(t, t):
        exponent, coef = pair_term(mp.summary, p)
        total.add(exponent, coef * falling(p.n - 2, mp.summary.V_delta_size - 2))
    return total


def second_moment_psibar(t: Template, p: ModelParams) -> float:
    """E[Psibar_G^2] summed over every matching and pairing.

    Requires no interior node of degree 2; v1 and v2 may have any degree.
    """
    if t.interior_degree2_nodes:
        raise UnsupportedTemplateError("second moment needs interior degrees other than 2")
    return second_moment_series(t, p).evaluate(p.delta)


def cross_moment_tilde_envelope(t1: Template, t2: Template, p: ModelParams) -> Envelope:
    """Envelope of E[Psitilde_G1 Psitilde_G2] for even templates."""
    if t1.has_odd_degree or t2.has_odd_degree:
        if t1.has_odd_degree != t2.has_odd_degree:
            return Envelope(0.0, 0.0)
        raise UnsupportedTemplateError("the envelope is stated for even templates")
    if t1.num_edges == 0 or t2.num_edges == 0:
        same = t1.canonical_key == t2.canonical_key
        return Envelope(1.0 if same else 0.0, 0.0)
    center = DeltaSeries()
    radius = DeltaSeries()
    for _, pairing, mp in iter_match_pairs(t1, t2, star_only=True):
        s = mp.summary
        exponent, coef = pair_term(s, p)
        coef *= falling(p.n - 2, s.V_delta_size - 2)
        if is_full(t1, t2, pairing):
            center.add(exponent, coef)
        else:
            radius.add(exponent, coef * 2 ** (4 * (len(mp.matching) - s.n_m_full)))
    return Envelope(center.evaluate(p.delta), radius.evaluate(p.delta))


def zero_signal_cross_moment(t1: Template, t2: Template, p: ModelParams) -> float:
    """Exact E[Psitilde_G1 Psitilde_G2] at delta = 0 (only full pairings survive)."""
    if t1.num_halfedges != t2.num_halfedges or t1.num_nodes != t2.num_nodes:
        return 0.0
    total = Fraction(0)
    for _, pairing, mp in iter_match_pairs(t1, t2, star_only=True):
        if is_full(t1, t2, pairing) and mp.summary.E_delta_size == 0:
            s = mp.summary
            total += falling(p.n - 2, s.V_delta_size - 2) * Fraction(
                p.d**s.n_cyc, p.K ** (s.V_delta_size - s.n_cc)
            )
    return float(total)


def variance_proxy(t: Template, p: ModelParams) -> float:
    """|Aut(G)| d^|E| (n-2)!/(n-|V|)!"""
    return float(automorphism_count(t) * p.d**t.num_edges * falling(p.n - 2, t.num_nodes - 2))


def gram_at_zero_signal(t1: Template, t2: Template, p: ModelParams) -> float:
    value = zero_signal_cross_moment(t1, t2, p)
    return value / math.sqrt(variance_proxy(t1, p) * variance_proxy(t2, p))


# ---------------------------------------------------------------------------
# Double chain with fastener
# ---------------------------------------------------------------------------


def conditional_variances_gstar(L: int, M: int, p: ModelParams) -> tuple[float, float]:
    """(Var0, Var1): variances of Psibar_{G*} given the means, rows 1-2 and x.

    The x = 1 variance shifts the K exponent by one whenever v1 and v2 share
    a component of the pruned multigraph and picks up a term from the
    fluctuation of the matched-row count.
    """
    if not isinstance(p, MomentParams):
        p = MomentParams(**p.as_dict())
    p.require_square("conditional variances")
    if L * M + 2 > MAX_GSTAR_NODES:
        raise CapacityError("G* nodes for conditional variances", L * M + 2, MAX_GSTAR_NODES)
    t = build_gstar(L, M)
    v, e = t.num_nodes, t.num_edges
    var0 = DeltaSeries()
    var1 = DeltaSeries()
    for _, pairing, mp in iter_match_pairs(t, t):
        if not pairing:
            continue
        s = mp.summary
        rows = falling(p.n - 2, s.V_delta_size - 2)
        if not s.v1_sim_v2:
            exponent, coef = pair_term(s, p)
            var0.add(exponent, coef * rows)
        exponent, coef = pair_term(s, p, k_shift=1 if s.v1_sim_v2 else 0)
        var1.add(exponent, coef * rows)

    spread = Fraction(0)
    for matching in enumerate_matchings(t, t):
        rows = falling(p.n - 2, 2 * v - len(matching) - 2)
        spread += rows * (p.K ** (len(matching) - 2) - 1)
    var1.add(2 * e, spread / p.K ** (2 * (v - 2)))

    value0, value1 = var0.evaluate(p.delta), var1.evaluate(p.delta)
    if value0 > value1 * (1 + 1e-12) + 1e-300:
        raise MomentIdentityError(f"Var0={value0:g} exceeds Var1={value1:g}")
    return value0, value1


@dataclass(frozen=True)
class VarianceRatioBound:
    value: float
    m_condition: bool
    n_condition: bool
    signal_condition: bool
    terms: dict = field(default_factory=dict)

    @property
    def conditions_hold(self) -> bool:
        return self.m_condition and self.n_condition and self.signal_condition


def _exp(log_value: float) -> float:
    return math.inf if log_value > 709.0 else math.exp(log_value)


def signal_threshold(L: int, M: int, K: int, n: int) -> float:
    """Smallest delta^2 satisfying the signal condition of the variance-ratio bound."""
    log_first = (M + 1) / M * (
        math.log(40 * (M + 2)) + (1 + 1 / (2 * (M + 1)) + 1 / L) * math.log(K) - 0.25 * math.log(n)
    )
    log_second = math.log(8) + 6 * math.log(M + 1) + 6 / (M + 1) * math.log(K)
    log_third = math.log(128) + 12 * math.log(M + 1)
    return _exp(max(log_first, log_second, log_third))


def variance_ratio_bound(L: int, M: int, p: ModelParams) -> VarianceRatioBound:
    """Upper bound on max(Var0, Var1) / E[Psibar_{G*} | x = 1]^2, in log space."""
    K, n = p.K, p.n
    if p.delta <= 0:
        inf = math.inf
        return VarianceRatioBound(inf, M >= 24, _n_condition(L, M, K, n), False, {"total": inf})
    log_d2 = 2 * math.log(p.delta)
    prefactor = 4 * math.log(10) + 4 * math.log(M + 2)
    log_a1 = (4 + 2 / (M + 1) + 4 / L) * math.log(K) - math.log(n) - 4 * (1 - 1 / (M + 1)) * log_d2
    log_a2 = math.log(K) - math.log(n)
    terms = {
        "chain": _exp(prefactor + max(log_a1, log_a2)),
        "fastener": _exp(math.log(K) + 2 * (M + 1) * math.log(M + 1) - 2 * (M + 1) * log_d2),
        "signal": _exp(math.log(2) + 5 * math.log(M + 1) - log_d2),
        "samples": 4 * M**2 * L**2 * K / n,
    }
    value = math.fsum(terms.values())
    terms["total"] = value
    threshold = signal_threshold(L, M, K, n)
    signal_ok = log_d2 >= math.log(threshold) - 1e-12 if math.isfinite(threshold) else False
    return VarianceRatioBound(
        value=value,
        m_condition=M >= 24,
        n_condition=_n_condition(L, M, K, n),
        signal_condition=signal_ok,
        terms=terms,
    )


def _n_condition(L: int, M: int, K: int, n: int) -> bool:
    return n >= 64 * max(4 * M**2 * L**2, 10**4 * (M + 2) ** 4) * K


# ---------------------------------------------------------------------------
# Combinatorial inequalities
# ---------------------------------------------------------------------------


@dataclass
class CombinatorialReport:
    cases: int = 0
    violations: list = field(default_factory=list)
    min_B: Optional[int] = None
    min_C: Optional[int] = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def _track(self, B: int, C: int) -> None:
        self.min_B = B if self.min_B is None else min(self.min_B, B)
        self.min_C = C if self.min_C is None else min(self.min_C, C)


@dataclass(frozen=True)
class PairingQuantities:
    B: int
    C: int
    b0: int
    b1: int
    b2: int
    phi: int
    star: bool
    cc_bound_ok: bool


def pairing_quantities(t1: Template, t2: Template, mp: MatchPair, star: bool) -> PairingQuantities:
    s = mp.summary
    m, P = len(mp.matching), len(mp.pairing)
    v1, v2, e1, e2 = t1.num_nodes, t2.num_nodes, t1.num_edges, t2.num_edges
    B = P - 2 * s.n_cyc - 2 * s.n_op_even - s.n_op_odd
    C = e1 + e2 - (2 * v1 + 2 * v2 - 3 * m - s.n_m_full) - P
    b0 = 2 * s.V_delta_size - v1 - v2
    b1 = -2 * b0 + s.E_delta_size
    b2 = (e1 + e2 - 2 * s.n_cyc) - s.E_delta_size - 2 * s.n_cc + 2 * s.V_delta_size - 2 * b0
    phi = 2 * (v1 + v2 - 2 * m) + 2 * B + C + 3 * (m - s.n_m_full)
    cc_ok = 2 * s.n_cc <= 2 * s.n_op_even + s.n_op_odd + 2 * m
    return PairingQuantities(B, C, b0, b1, b2, phi, star, cc_ok)


def _star(t1: Template, t2: Template, matching) -> bool:
    hit1 = {a for a, _ in matching}
    hit2 = {b for _, b in matching}
    return all(c & hit1 for c in t1.components) and all(c & hit2 for c in t2.components)


def check_combinatorial_inequalities(
    t1: Template, t2: Template, report: Optional[CombinatorialReport] = None
) -> CombinatorialReport:
    """Check B >= 0, C >= 0, the b-identities and (on star matchings) the component bound.

    Both templates must be even; C can be negative otherwise.
    """
    if t1.has_odd_degree or t2.has_odd_degree:
        raise UnsupportedTemplateError("pairing inequalities are stated for even templates")
    report = report or CombinatorialReport()
    for matching, pairing, mp in iter_match_pairs(t1, t2):
        q = pairing_quantities(t1, t2, mp, _star(t1, t2, matching))
        report.cases += 1
        report._track(q.B, q.C)
        problems = []
        if q.B < 0:
            problems.append("B < 0")
        if q.C < 0:
            problems.append("C < 0")
        if q.b0 != t1.num_nodes + t2.num_nodes - 2 * len(matching):
            problems.append("b0 identity")
        if q.b1 != (len(matching) - mp.summary.n_m_full) + q.C:
            problems.append("b1 identity")
        if q.b2 != 2 * len(matching) + len(pairing) - 2 * mp.summary.n_cyc - 2 * mp.summary.n_cc:
            problems.append("b2 identity")
        if q.star and not q.cc_bound_ok:
            problems.append("component bound")
        if q.star and q.b2 < q.B:
            problems.append("b2 < B")
        if problems:
            report.violations.append(
                {
                    "t1": t1.to_text(),
                    "t2": t2.to_text(),
                    "matching": matching,
                    "pairing": pairing,
                    "problems": problems,
                }
            )
    return report


def check_all_inequalities(templates: Iterable[Template]) -> CombinatorialReport:
    templates = list(templates)
    report = CombinatorialReport()
    for t1 in templates:
        for t2 in templates:
            check_combinatorial_inequalities(t1, t2, report)
    logger.info("checked %d matching/pairing cases, %d violations", report.cases, len(report.violations))
    return report


# ---------------------------------------------------------------------------
# Reports against Monte Carlo
# ---------------------------------------------------------------------------

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def verdict_for(closed_form: float, estimate: float, se: float, z: float = 3.0) -> str:
    diff = abs(closed_form - estimate)
    if not np.isfinite(estimate) or not np.isfinite(se):
        return FAIL
    if diff > z * se:
        return FAIL
    if se > 10 * max(0.01 * abs(closed_form), 1e-3):
        return INCONCLUSIVE
    return PASS


@dataclass(frozen=True)
class MomentReport:
    name: str
    closed_form: float
    mc_estimate: float
    mc_se: float
    n_trials: int
    z: float = 3.0

    @property
    def verdict(self) -> str:
        return verdict_for(self.closed_form, self.mc_estimate, self.mc_se, self.z)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "closed_form": self.closed_form,
            "mc_estimate": self.mc_estimate,
            "mc_se": self.mc_se,
            "n_trials": self.n_trials,
            "verdict": self.verdict,
        }


__all__ = [
    "MomentParams",
    "DeltaSeries",
    "Envelope",
    "MomentReport",
    "VarianceRatioBound",
    "CombinatorialReport",
    "PairingQuantities",
    "PASS",
    "FAIL",
    "INCONCLUSIVE",
    "falling",
    "pair_term",
    "labeled_mean_psibar",
    "mean_psibar",
    "mean_psibar_series",
    "mean_x_psibar",
    "mean_x_psitilde",
    "gstar_conditional_mean",
    "cross_moment_labeled",
    "cross_moment_envelope",
    "cross_moment_tilde_envelope",
    "second_moment_psibar",
    "second_moment_series",
    "zero_signal_cross_moment",
    "gram_at_zero_signal",
    "variance_proxy",
    "conditional_variances_gstar",
    "signal_threshold",
    "variance_ratio_bound",
    "pairing_quantities",
    "check_combinatorial_inequalities",
    "check_all_inequalities",
    "verdict_for",
]
