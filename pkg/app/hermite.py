"""Hermite polynomials and the graph polynomials built from them.

For a template G and an injective labeling pi of its nodes by rows of Y
(v1 -> row 1, v2 -> row 2) the polynomial is

    sum over feature tuples (j_e)_{e in E} of prod_v prod_j psibar_{beta_vj}(Y_{pi(v), j})

where ``beta_vj`` counts the half-edges at v whose edge carries feature j.
The feature sum factorises over nodes: each node contributes a tensor over
the features of its incident edges, and the tensors are contracted with
``np.einsum``. Labelings (and MC trials) ride along as a leading batch axis.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import hermite_e

from app.errors import CapacityError, InvalidParamsError, MissingCenteringError, UnsupportedTemplateError
from app.multigraph import Template

logger = logging.getLogger(__name__)

MAX_ORDER = 32
MAX_LABELINGS = 10_000_000
MAX_NODE_TENSOR = 1 << 20
MAX_WORK = 2_000_000_000
CHUNK_ELEMENTS = 1 << 24

_BATCH = 0


@dataclass(frozen=True)
class HermiteContext:
    delta: float
    K: int

    @property
    def correction(self) -> float:
        return 1.0 + self.delta**2 / self.K


@dataclass(frozen=True)
class PolyValue:
    value: float
    template: Template
    labeling: Optional[tuple[int, ...]] = None
    n_terms_evaluated: int = 0


# ---------------------------------------------------------------------------
# One-dimensional polynomials
# ---------------------------------------------------------------------------


def hermite(k: int, x):
    """Probabilists' Hermite polynomial: E[psi_k(z + mu)] = mu^k for z ~ N(0, 1)."""
    if k < 0:
        raise InvalidParamsError(f"order must be >= 0, got {k}")
    if k > MAX_ORDER:
        raise CapacityError("hermite order", k, MAX_ORDER)
    coef = np.zeros(k + 1)
    coef[k] = 1.0
    return hermite_e.hermeval(x, coef)


def hermite_table(kmax: int, x: np.ndarray) -> np.ndarray:
    """Stack of psi_0..psi_kmax at ``x`` by the three-term recurrence."""
    if kmax > MAX_ORDER:
        raise CapacityError("hermite order", kmax, MAX_ORDER)
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = x
    for k in range(1, kmax):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def hermite_bar(beta: int, node_is_interior_deg2: bool, x, ctx: HermiteContext):
    if beta < 0:
        raise InvalidParamsError(f"beta must be >= 0, got {beta}")
    if beta == 2 and node_is_interior_deg2:
        return np.asarray(x, dtype=float) ** 2 - ctx.correction
    return hermite(beta, x)


# ---------------------------------------------------------------------------
# Labelings
# ---------------------------------------------------------------------------


def count_labelings(num_nodes: int, n: int) -> int:
    if num_nodes > n:
        return 0
    return math.perm(n - 2, num_nodes - 2)


def labelings(t: Template, n: int) -> np.ndarray:
    """All injective labelings as an array of row indices, shape (P, |V|)."""
    count = count_labelings(t.num_nodes, n)
    if count > MAX_LABELINGS:
        raise CapacityError("injective labelings", count, MAX_LABELINGS)
    if count == 0:
        return np.empty((0, t.num_nodes), dtype=np.int64)
    rows = np.empty((count, t.num_nodes), dtype=np.int64)
    rows[:, 0], rows[:, 1] = 0, 1
    if t.num_nodes > 2:
        rows[:, 2:] = np.fromiter(
            itertools.chain.from_iterable(itertools.permutations(range(2, n), t.num_nodes - 2)),
            dtype=np.int64,
            count=count * (t.num_nodes - 2),
        ).reshape(count, t.num_nodes - 2)
    return rows


def _check_labeling(t: Template, pi: Sequence[int], n: int) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.int64)
    if pi.shape != (t.num_nodes,):
        raise InvalidParamsError(f"labeling must have {t.num_nodes} entries")
    if pi[0] != 0 or pi[1] != 1:
        raise InvalidParamsError("labeling must send v1 to row 1 and v2 to row 2")
    if len(set(pi.tolist())) != len(pi):
        raise InvalidParamsError(f"labeling {pi.tolist()} is not injective")
    if pi.min() < 0 or pi.max() >= n:
        raise InvalidParamsError(f"labeling {pi.tolist()} leaves rows 1..{n}")
    return pi


# ---------------------------------------------------------------------------
# Contraction plans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _NodeFactor:
    node: int
    edge_vars: tuple[int, ...]
    counts: np.ndarray  # (d**k, d) multiplicity of each feature per assignment
    degree: int
    interior_deg2: bool


class ContractionPlan:
    """Node tensors and einsum sublists for the edges in ``edge_ids``."""

    def __init__(self, t: Template, d: int, edge_ids: Optional[Sequence[int]] = None):
        self.template = t
        self.d = d
        self.edge_ids = tuple(range(t.num_edges)) if edge_ids is None else tuple(edge_ids)
        chosen = set(self.edge_ids)
        factors = []
        for v in range(t.num_nodes):
            mult: dict[int, int] = {}
            for h in t.incident[v]:
                if (h >> 1) in chosen:
                    mult[h >> 1] = mult.get(h >> 1, 0) + 1
            if not mult:
                continue
            edge_vars = tuple(sorted(mult))
            size = d ** len(edge_vars)
            if size > MAX_NODE_TENSOR:
                raise CapacityError(f"node tensor at node {v + 1}", size, MAX_NODE_TENSOR)
            grid = np.indices((d,) * len(edge_vars)).reshape(len(edge_vars), -1).T
            counts = np.zeros((size, d), dtype=np.int64)
            features = np.arange(d)
            for col, e in enumerate(edge_vars):
                counts += mult[e] * (grid[:, col][:, None] == features[None, :])
            factors.append(
                _NodeFactor(
                    node=v,
                    edge_vars=edge_vars,
                    counts=counts,
                    degree=sum(mult.values()),
                    interior_deg2=v >= 2 and t.degrees[v] == 2,
                )
            )
        self.factors = tuple(factors)
        self.work_per_labeling = sum(f.counts.size for f in factors) or 1

    def _node_tensor(self, f: _NodeFactor, rows_y: np.ndarray, ctx: HermiteContext) -> np.ndarray:
        # rows_y: (B, d) -> (B, d, ..., d)
        table = hermite_table(f.degree, rows_y)
        if f.interior_deg2 and f.degree >= 2:
            table[2] = rows_y**2 - ctx.correction
        table = np.moveaxis(table, 0, 1)  # (B, C, d)
        gathered = table[:, f.counts, np.arange(self.d)]  # (B, d**k, d)
        out = gathered.prod(axis=-1)
        return out.reshape((rows_y.shape[0],) + (self.d,) * len(f.edge_vars))

    def contract(self, Yb: np.ndarray, rows: np.ndarray, ctx: HermiteContext) -> np.ndarray:
        """Values for every (trial, labeling); Yb is (T, n, d), rows is (P, |V|)."""
        T, P = Yb.shape[0], rows.shape[0]
        if not self.factors:
            return np.ones((T, P))
        biggest = max(f.counts.size for f in self.factors)
        step = max(1, CHUNK_ELEMENTS // biggest)
        flat_t = np.repeat(np.arange(T), P)
        flat_p = np.tile(np.arange(P), T)
        out = np.empty(T * P)
        for lo in range(0, T * P, step):
            sl = slice(lo, min(lo + step, T * P))
            operands = []
            for f in self.factors:
                rows_y = Yb[flat_t[sl], rows[flat_p[sl], f.node], :]
                operands.append(self._node_tensor(f, rows_y, ctx))
                operands.append([_BATCH] + [e + 1 for e in f.edge_vars])
            out[sl] = np.einsum(*operands, [_BATCH], optimize="greedy")
        return out.reshape(T, P)


def _as_batch(Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 2:
        return Y[None]
    if Y.ndim != 3:
        raise InvalidParamsError(f"Y must be (n, d) or (T, n, d), got shape {Y.shape}")
    return Y


def _check_work(plan: ContractionPlan, num_rows: int) -> None:
    work = plan.work_per_labeling * num_rows
    if work > MAX_WORK:
        raise CapacityError("feature-sum contraction", work, MAX_WORK)


def psibar_labeled_batch(t: Template, Y: np.ndarray, rows: np.ndarray, ctx: HermiteContext) -> np.ndarray:
    """Psibar_{G, pi} for each labeling in ``rows`` and each trial; shape (T, P)."""
    Yb = _as_batch(Y)
    plan = ContractionPlan(t, Yb.shape[-1])
    _check_work(plan, Yb.shape[0] * rows.shape[0])
    return plan.contract(Yb, np.asarray(rows, dtype=np.int64), ctx)


def eval_psibar_labeled(t: Template, pi: Sequence[int], Y: np.ndarray, ctx: HermiteContext) -> float:
    Y = np.asarray(Y, dtype=float)
    pi = _check_labeling(t, pi, Y.shape[0])
    return float(psibar_labeled_batch(t, Y, pi[None, :], ctx)[0, 0])


def psibar_batch(t: Template, Y: np.ndarray, ctx: HermiteContext) -> np.ndarray:
    """Psibar_G summed over all labelings, one value per trial."""
    Yb = _as_batch(Y)
    rows = labelings(t, Yb.shape[1])
    values = psibar_labeled_batch(t, Yb, rows, ctx)
    return values.sum(axis=1)


def eval_psibar(t: Template, Y: np.ndarray, ctx: HermiteContext) -> PolyValue:
    Y = np.asarray(Y, dtype=float)
    rows = labelings(t, Y.shape[0])
    values = psibar_labeled_batch(t, Y, rows, ctx)[0]
    return PolyValue(
        value=math.fsum(values.tolist()),
        template=t,
        n_terms_evaluated=Y.shape[1] ** t.num_edges * rows.shape[0],
    )


# ---------------------------------------------------------------------------
# Recentred polynomial
# ---------------------------------------------------------------------------


def edge_components(t: Template) -> list[tuple[int, ...]]:
    """Edge ids of each connected component that carries at least one edge."""
    groups = []
    for comp in t.components:
        edge_ids = tuple(e for e, (u, _) in enumerate(t.edges) if u in comp)
        if edge_ids:
            groups.append(edge_ids)
    return groups


def component_template(t: Template, edge_ids: Sequence[int]) -> Template:
    nodes = {u for e in edge_ids for u in t.edges[e]}
    keep = [0, 1] + sorted(v for v in nodes if v >= 2)
    index = {v: i for i, v in enumerate(keep)}
    return Template.from_edges(len(keep), [(index[t.edges[e][0]], index[t.edges[e][1]]) for e in edge_ids])


def centering_constants(t: Template, ctx: HermiteContext, d: int) -> list[float]:
    """Per-labeling mean of each edge-carrying component of ``t``."""
    from app.moments import MomentParams, labeled_mean_psibar

    p = MomentParams(n=max(t.num_nodes, 2), d=d, K=ctx.K, delta=ctx.delta)
    constants = []
    for edge_ids in edge_components(t):
        sub = component_template(t, edge_ids)
        try:
            constants.append(labeled_mean_psibar(sub, p))
        except UnsupportedTemplateError as exc:
            raise MissingCenteringError(
                f"no closed-form centering for component {sub.to_text().strip()!r}: {exc}"
            ) from exc
    return constants


def psitilde_batch(
    t: Template,
    Y: np.ndarray,
    ctx: HermiteContext,
    centering: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Psitilde_G = sum_pi prod_l (Psibar_{G_l, pi} - E Psibar_{G_l, pi}); one value per trial."""
    Yb = _as_batch(Y)
    groups = edge_components(t)
    if centering is None:
        centering = centering_constants(t, ctx, Yb.shape[-1])
    if len(centering) != len(groups):
        raise MissingCenteringError(
            f"need {len(groups)} centering constants, got {len(centering)}"
        )
    rows = labelings(t, Yb.shape[1])
    total = np.ones((Yb.shape[0], rows.shape[0]))
    for edge_ids, c in zip(groups, centering):
        plan = ContractionPlan(t, Yb.shape[-1], edge_ids)
        _check_work(plan, Yb.shape[0] * rows.shape[0])
        total *= plan.contract(Yb, rows, ctx) - c
    return total.sum(axis=1)


def eval_psitilde(
    t: Template,
    Y: np.ndarray,
    ctx: HermiteContext,
    centering: Optional[Sequence[float]] = None,
) -> PolyValue:
    Y = np.asarray(Y, dtype=float)
    value = float(psitilde_batch(t, Y, ctx, centering)[0])
    return PolyValue(
        value=value,
        template=t,
        n_terms_evaluated=Y.shape[1] ** t.num_edges * count_labelings(t.num_nodes, Y.shape[0]),
    )


__all__ = [
    "HermiteContext",
    "PolyValue",
    "ContractionPlan",
    "hermite",
    "hermite_table",
    "hermite_bar",
    "count_labelings",
    "labelings",
    "psibar_labeled_batch",
    "eval_psibar_labeled",
    "psibar_batch",
    "eval_psibar",
    "edge_components",
    "component_template",
    "centering_constants",
    "psitilde_batch",
    "eval_psitilde",
]
