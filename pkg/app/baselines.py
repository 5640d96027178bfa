"""Distance and spectral baselines, and the diagnostics showing YᵀY carries no signal when d = K."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.linalg import null_space
from scipy.spatial.distance import pdist
from scipy.stats import mannwhitneyu

from app.errors import InvalidParamsError
from app.model import ModelParams, Seed, make_rng, sample_instances

logger = logging.getLogger(__name__)

LINKAGES = ("single", "complete", "average")
MAX_PATH_LENGTH = 6
RANK_TOL = 1e-10


def _first_appearance(labels: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].astype(np.int64)


def hierarchical_clustering(Y: np.ndarray, num_clusters: int, method: str = "single") -> np.ndarray:
    """Agglomerate rows on squared Euclidean distances and cut at ``num_clusters``."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    if not 1 <= num_clusters <= n:
        raise InvalidParamsError(f"need 1 <= num_clusters <= n = {n}, got {num_clusters}")
    if method not in LINKAGES:
        raise InvalidParamsError(f"unknown linkage {method!r}, expected one of {LINKAGES}")
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    tree = linkage(pdist(Y, "sqeuclidean"), method=method)
    return _first_appearance(fcluster(tree, num_clusters, criterion="maxclust"))


@dataclass(frozen=True)
class SpectralProjection:
    scores: np.ndarray  # (n, K) = Y @ directions
    directions: np.ndarray  # (d, K), orthonormal columns
    rank: int
    padded: bool


def spectral_project(Y: np.ndarray, K: int) -> SpectralProjection:
    """Project rows on the top-K right singular directions of Y.

    A rank-deficient Y gets its missing directions from an arbitrary
    orthonormal complement; ``padded`` flags that case.
    """
    Y = np.asarray(Y, dtype=float)
    d = Y.shape[1]
    if not 1 <= K <= d:
        raise InvalidParamsError(f"need 1 <= K <= d = {d}, got K={K}")
    _, s, vt = np.linalg.svd(Y, full_matrices=False)
    scale = s[0] if s.size else 0.0
    rank = int(np.sum(s > RANK_TOL * max(scale, 1.0)))
    directions = vt[: min(rank, K)].T
    padded = directions.shape[1] < K
    if padded:
        complement = null_space(directions.T) if directions.size else np.eye(d)
        directions = np.hstack([directions, complement[:, : K - directions.shape[1]]])
        logger.debug("spectral projection padded: rank %d < K=%d", rank, K)
    return SpectralProjection(scores=Y @ directions, directions=directions, rank=rank, padded=padded)


def spectral_clustering(Y: np.ndarray, K: int, num_clusters: int, method: str = "single") -> np.ndarray:
    return hierarchical_clustering(spectral_project(Y, K).scores, num_clusters, method=method)


def gram_identity_gap(Y: np.ndarray, params: ModelParams) -> float:
    """Frobenius distance between (1/n) YᵀY and its expectation (1 + delta^2/K) I when d = K."""
    Y = np.asarray(Y, dtype=float)
    n, d = Y.shape
    gram = Y.T @ Y / n
    return float(np.linalg.norm(gram - params.correction * np.eye(d)))


def _check_length(D: int) -> None:
    if not 1 <= D <= MAX_PATH_LENGTH:
        raise InvalidParamsError(f"path length must be in 1..{MAX_PATH_LENGTH}, got {D}")


def path_polynomial_batch(Y: np.ndarray, D: int) -> np.ndarray:
    """Entry (1, 2) of (YYᵀ)^D for a stack of instances (..., n, d)."""
    _check_length(D)
    Y = np.asarray(Y, dtype=float)
    gram = np.einsum("...nd,...ne->...de", Y, Y)
    inner = np.linalg.matrix_power(gram, D - 1)
    return np.einsum("...d,...de,...e->...", Y[..., 0, :], inner, Y[..., 1, :])


def path_polynomial_diagnostic(Y: np.ndarray, D: int, calibration: float = 0.0) -> float:
    return float(path_polynomial_batch(Y, D)) - calibration


def calibrate_path_polynomial(params: ModelParams, D: int, trials: int, seed: Seed) -> float:
    """Monte Carlo mean of the path polynomial under pure noise."""
    null = dataclasses.replace(params, delta=0.0)
    batch = sample_instances(null, trials, seed)
    return float(path_polynomial_batch(batch.Y, D).mean())


def auc(scores1, scores0) -> float:
    """P(score1 > score0) with ties counted half, via the Mann-Whitney U statistic."""
    scores1 = np.asarray(scores1, dtype=float)
    scores0 = np.asarray(scores0, dtype=float)
    if scores1.size == 0 or scores0.size == 0:
        raise InvalidParamsError("AUC needs scores in both classes")
    result = mannwhitneyu(scores1, scores0, alternative="two-sided")
    return float(result.statistic / (scores1.size * scores0.size))


@dataclass(frozen=True)
class DiagnosticAUC:
    auc: float
    calibration: float
    n_pos: int
    n_neg: int


def diagnostic_auc(params: ModelParams, D: int, trials: int, seed: int) -> DiagnosticAUC:
    """AUC of the calibrated path polynomial for separating x = 1 from x = 0."""
    calibration = calibrate_path_polynomial(params, D, trials, make_rng(seed, 0))
    batch = sample_instances(params, trials, make_rng(seed, 1))
    scores = path_polynomial_batch(batch.Y, D) - calibration
    x = batch.x.astype(bool)
    return DiagnosticAUC(
        auc=auc(scores[x], scores[~x]),
        calibration=calibration,
        n_pos=int(x.sum()),
        n_neg=int((~x).sum()),
    )


__all__ = [
    "LINKAGES",
    "hierarchical_clustering",
    "SpectralProjection",
    "spectral_project",
    "spectral_clustering",
    "gram_identity_gap",
    "path_polynomial_batch",
    "path_polynomial_diagnostic",
    "calibrate_path_polynomial",
    "auc",
    "DiagnosticAUC",
    "diagnostic_auc",
]
