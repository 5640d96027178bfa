"""Median-of-Means estimator of x built on the double chain with fastener.

Pipeline for one pair of rows (i, j):

1. ``split_samples``: every row is turned into ``lam`` independent copies with
   shrunken means through an orthogonal matrix whose first column is
   constant; the other rows are spread over ``lam`` disjoint batches.
2. ``t_statistic``: Psibar_{G*} on batch l, with rows i and j playing v1, v2.
3. ``mom_decision``: x_hat = 1 iff the median statistic beats half the
   conditional mean under x = 1.

``pairwise_partition`` runs this for every pair and joins rows by union-find.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy.cluster.hierarchy import DisjointSet
from scipy.optimize import linear_sum_assignment

from app.errors import CapacityError, InsufficientSamplesError, InvalidParamsError, PartitionError
from app.hermite import HermiteContext, count_labelings, eval_psibar
from app.model import Instance, Seed, make_rng
from app.moments import MomentParams, gstar_conditional_mean
from app.multigraph import Template, build_gstar

logger = logging.getLogger(__name__)

ROBUST_MARGIN = 1.1
POWER_STEPS = 100
POWER_TOL = 1e-8
DEFAULT_PAIR_BUDGET = 50_000_000


def _smallest_odd_at_least(x: float) -> int:
    k = max(1, math.ceil(x))
    return k if k % 2 else k + 1


@dataclass(frozen=True)
class EstimatorConfig:
    L: int
    M: int
    lam: int
    delta: float
    K: int
    override_threshold: Optional[float] = None
    robust: bool = False

    def __post_init__(self) -> None:
        if self.L < 1:
            raise InvalidParamsError(f"L must be >= 1, got {self.L}")
        if self.M < 1 or self.M % 2 == 0:
            raise InvalidParamsError(f"M must be a positive odd integer, got {self.M}")
        if self.lam < 1 or self.lam % 2 == 0:
            raise InvalidParamsError(f"lambda must be a positive odd integer, got {self.lam}")
        if self.K < 1 or self.delta < 0:
            raise InvalidParamsError(f"need K >= 1 and delta >= 0, got K={self.K}, delta={self.delta}")

    @classmethod
    def theoretical(cls, n: int, K: int, delta: float, **overrides) -> "EstimatorConfig":
        values = {
            "M": _smallest_odd_at_least(max(math.log(K), 24)),
            "L": max(1, math.floor(math.log(K))),
            "lam": _smallest_odd_at_least(24 * math.log(n)),
            "delta": delta,
            "K": K,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def template(self) -> Template:
        return build_gstar(self.L, self.M)

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "M": self.M,
            "lambda": self.lam,
            "delta": self.delta,
            "K": self.K,
            "override_threshold": self.override_threshold,
            "robust": self.robust,
        }


@dataclass(frozen=True)
class SplitData:
    copies: np.ndarray  # (lam, n, d): copy l of every row
    i: int
    j: int
    batches: np.ndarray  # (lam, batch_size) row indices
    discarded: tuple[int, ...] = ()

    @property
    def lam(self) -> int:
        return self.copies.shape[0]

    @property
    def batch_size(self) -> int:
        return self.batches.shape[1]

    def batch_rows(self, batch: int) -> np.ndarray:
        """Rows (i, j, J_batch) of copy ``batch``, ready for Psibar_{G*}."""
        idx = np.concatenate(([self.i, self.j], self.batches[batch]))
        return self.copies[batch, idx, :]


@dataclass(frozen=True)
class MomDecision:
    x_hat: int
    median_T: float
    threshold: float
    per_batch_T: tuple[float, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "x_hat": self.x_hat,
            "median_T": self.median_T,
            "threshold": self.threshold,
            "per_batch_T": list(self.per_batch_T),
        }


def householder_constant_column(lam: int) -> np.ndarray:
    """Orthogonal, symmetric lam x lam matrix whose first column is 1/sqrt(lam)."""
    if lam == 1:
        return np.ones((1, 1))
    v = -np.full(lam, 1.0 / math.sqrt(lam))
    v[0] += 1.0
    return np.eye(lam) - 2.0 * np.outer(v, v) / (v @ v)


def split_samples(
    inst: Union[Instance, np.ndarray], i: int, j: int, cfg: EstimatorConfig, seed: Seed
) -> SplitData:
    """Split every row into ``cfg.lam`` copies and draw disjoint batches for pair (i, j).

    Copy l of row r is N(b_r mu / sqrt(lam), I); the batch J_l uses copy l of
    its rows, and rows i, j contribute their copy l to batch l. Leftover rows
    ((n - 2) mod lam of them) are discarded.
    """
    Y = inst.Y if isinstance(inst, Instance) else np.asarray(inst, dtype=float)
    n, d = Y.shape
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise InvalidParamsError(f"need two distinct rows in 0..{n - 1}, got {i}, {j}")
    needed = build_gstar(cfg.L, cfg.M).num_nodes - 2
    size = (n - 2) // cfg.lam
    if size < needed:
        raise InsufficientSamplesError(
            f"n - 2 = {n - 2} rows cannot fill {cfg.lam} batches of {needed} rows"
        )
    rng = make_rng(seed)
    rest = np.array([r for r in range(n) if r not in (i, j)], dtype=np.int64)
    order = rng.permutation(rest)
    batches = order[: cfg.lam * size].reshape(cfg.lam, size)
    aux = rng.standard_normal((cfg.lam - 1, n, d))
    stacked = np.concatenate([Y[None], aux], axis=0)
    copies = np.einsum("lm,mnd->lnd", householder_constant_column(cfg.lam), stacked)
    return SplitData(
        copies=copies,
        i=i,
        j=j,
        batches=batches,
        discarded=tuple(int(r) for r in order[cfg.lam * size :]),
    )


def batch_context(cfg: EstimatorConfig) -> HermiteContext:
    # Split copies carry mean mu / sqrt(lam).
    return HermiteContext(delta=cfg.delta / math.sqrt(cfg.lam), K=cfg.K)


def t_statistic(split: SplitData, batch: int, cfg: EstimatorConfig) -> float:
    rows = split.batch_rows(batch)
    return eval_psibar(cfg.template, rows, batch_context(cfg)).value


def mom_threshold(cfg: EstimatorConfig, batch_size: int) -> float:
    """Half of E[T | x = 1] for one batch, unless overridden."""
    if cfg.override_threshold is not None:
        return float(cfg.override_threshold)
    p = MomentParams(n=batch_size + 2, d=cfg.K, K=cfg.K, delta=cfg.delta)
    return 0.5 * gstar_conditional_mean(cfg.template, p, batch_size=batch_size, shrink=cfg.lam)


def mom_decision(split: SplitData, cfg: EstimatorConfig, per_batch: Optional[Sequence[float]] = None) -> MomDecision:
    if per_batch is None:
        per_batch = [t_statistic(split, ell, cfg) for ell in range(split.lam)]
    values = tuple(float(v) for v in per_batch)
    median = float(np.median(values))
    threshold = mom_threshold(cfg, split.batch_size)
    return MomDecision(
        x_hat=int(median > threshold),
        median_T=median,
        threshold=threshold,
        per_batch_T=values,
    )


def estimate_x(inst: Union[Instance, np.ndarray], i: int, j: int, cfg: EstimatorConfig, seed: Seed) -> MomDecision:
    split = split_samples(inst, i, j, cfg, seed)
    return mom_decision(split, cfg)


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionResult:
    labels: np.ndarray
    n_components: int
    degenerate: bool
    decisions: dict = field(default_factory=dict, repr=False)


def pair_cost(n: int, cfg: EstimatorConfig) -> int:
    """Labelings evaluated by a full pairwise sweep."""
    size = (n - 2) // cfg.lam
    per_batch = count_labelings(cfg.template.num_nodes, size + 2)
    return n * (n - 1) // 2 * cfg.lam * per_batch


def labels_from_components(n: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    ds = DisjointSet(range(n))
    for i, j in edges:
        ds.merge(i, j)
    labels = np.empty(n, dtype=np.int64)
    for label, subset in enumerate(sorted(ds.subsets(), key=min)):
        labels[list(subset)] = label
    return labels


def pairwise_partition(
    inst: Instance, cfg: EstimatorConfig, seed: int, budget: int = DEFAULT_PAIR_BUDGET
) -> PartitionResult:
    """Join rows whose pairwise decision says "same group"; components are the groups."""
    n = inst.Y.shape[0]
    cost = pair_cost(n, cfg)
    logger.info("pairwise partition: %d pairs, %d labelings", n * (n - 1) // 2, cost)
    if cost > budget:
        raise CapacityError("pairwise partition labelings", cost, budget)
    decisions = {}
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            decision = estimate_x(inst, i, j, cfg, make_rng(seed, i, j))
            decisions[(i, j)] = decision
            keep = decision.x_hat == 1
            if cfg.robust:
                keep = decision.median_T > ROBUST_MARGIN * decision.threshold
            if keep:
                edges.append((i, j))
    labels = labels_from_components(n, edges)
    count = int(labels.max()) + 1 if n else 0
    return PartitionResult(labels=labels, n_components=count, degenerate=count in (1, n), decisions=decisions)


def sign_recovery(Y_group: np.ndarray, seed: Seed) -> np.ndarray:
    """Split one group into its two signs along the dominant direction of sum Y_i Y_i^T."""
    Y_group = np.atleast_2d(np.asarray(Y_group, dtype=float))
    if Y_group.shape[0] == 0:
        raise InvalidParamsError("sign recovery needs a non-empty group")
    gram = Y_group.T @ Y_group
    rng = make_rng(seed)
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(POWER_STEPS):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            break
        w /= norm
        done = np.linalg.norm(w - v) < POWER_TOL
        v = w
        if done:
            break
    labels = np.where(Y_group @ v < 0, -1, 1)
    if labels[0] < 0:
        labels = -labels
    return labels


def recover_partition(inst: Instance, cfg: EstimatorConfig, seed: int, budget: int = DEFAULT_PAIR_BUDGET) -> np.ndarray:
    """Group labels from ``pairwise_partition`` refined by per-group sign recovery."""
    groups = pairwise_partition(inst, cfg, seed, budget).labels
    labels = np.empty_like(groups)
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        signs = sign_recovery(inst.Y[members], make_rng(seed, 1_000_003, int(g)))
        labels[members] = 2 * g + (signs > 0)
    return labels


def as_label_vector(partition, n: Optional[int] = None) -> np.ndarray:
    """Label vector from either labels or a collection of index groups."""
    if isinstance(partition, np.ndarray) and partition.ndim == 1:
        return partition.astype(np.int64)
    partition = list(partition)
    if all(np.isscalar(g) for g in partition):
        return np.asarray(partition, dtype=np.int64)
    groups = [list(g) for g in partition]
    members = [x for g in groups for x in g]
    size = len(members) if n is None else n
    if sorted(members) != list(range(size)):
        raise PartitionError("groups must cover 0..n-1 exactly once")
    labels = np.empty(size, dtype=np.int64)
    for label, g in enumerate(groups):
        labels[g] = label
    return labels


def cluster_error(est_partition, true_partition) -> float:
    """(1 / 2n) min over label permutations of the summed symmetric differences."""
    est = as_label_vector(est_partition)
    true = as_label_vector(true_partition)
    if est.shape != true.shape:
        raise PartitionError(f"partitions cover {est.size} and {true.size} elements")
    n = est.size
    if n == 0:
        return 0.0
    est_ids, est_idx = np.unique(est, return_inverse=True)
    true_ids, true_idx = np.unique(true, return_inverse=True)
    size = max(len(est_ids), len(true_ids))
    overlap = np.zeros((size, size))
    np.add.at(overlap, (est_idx, true_idx), 1)
    est_sizes = overlap.sum(axis=1)
    true_sizes = overlap.sum(axis=0)
    cost = est_sizes[:, None] + true_sizes[None, :] - 2 * overlap
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / (2 * n))


__all__ = [
    "EstimatorConfig",
    "SplitData",
    "MomDecision",
    "PartitionResult",
    "householder_constant_column",
    "split_samples",
    "batch_context",
    "t_statistic",
    "mom_threshold",
    "mom_decision",
    "estimate_x",
    "pair_cost",
    "labels_from_components",
    "pairwise_partition",
    "sign_recovery",
    "recover_partition",
    "as_label_vector",
    "cluster_error",
]
