import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.errors import CapacityError, InsufficientSamplesError, InvalidParamsError, PartitionError
from app.estimator import (
    EstimatorConfig,
    as_label_vector,
    cluster_error,
    estimate_x,
    householder_constant_column,
    labels_from_components,
    mom_decision,
    mom_threshold,
    pair_cost,
    pairwise_partition,
    recover_partition,
    sign_recovery,
    split_samples,
    t_statistic,
)
from app.model import ModelParams, make_rng, sample_conditional, sample_instance, sample_means
from app.moments import MomentParams, gstar_conditional_mean

SMALL = EstimatorConfig(L=1, M=1, lam=3, delta=2.0, K=2)


# -- configuration -------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(L=0, M=1, lam=3),
        dict(L=1, M=2, lam=3),
        dict(L=1, M=1, lam=4),
        dict(L=1, M=1, lam=3, delta=-1.0),
    ],
)
def test_invalid_config(kwargs):
    base = dict(delta=1.0, K=2)
    base.update(kwargs)
    with pytest.raises(InvalidParamsError):
        EstimatorConfig(**base)


def test_theoretical_defaults_and_overrides():
    cfg = EstimatorConfig.theoretical(62, 2, 4.0)
    assert (cfg.L, cfg.M, cfg.lam) == (1, 25, 101)
    cfg = EstimatorConfig.theoretical(62, 2, 4.0, L=1, M=1, lam=3, override_threshold=None)
    assert (cfg.L, cfg.M, cfg.lam, cfg.override_threshold) == (1, 1, 3, None)
    assert cfg.as_dict()["lambda"] == 3


# -- sample splitting ------------------------------------------------------------


@pytest.mark.parametrize("lam", [1, 3, 5, 7])
def test_householder_matrix(lam):
    H = householder_constant_column(lam)
    np.testing.assert_allclose(H @ H.T, np.eye(lam), atol=1e-12)
    np.testing.assert_allclose(H, H.T, atol=1e-12)
    np.testing.assert_allclose(H[:, 0], np.full(lam, 1 / math.sqrt(lam)), atol=1e-12)


def test_single_copy_is_the_data(small_instance):
    cfg = EstimatorConfig(L=1, M=1, lam=1, delta=2.0, K=2)
    split = split_samples(small_instance, 0, 1, cfg, seed=0)
    np.testing.assert_array_equal(split.copies[0], small_instance.Y)
    assert sorted(split.batches[0].tolist()) == list(range(2, 12))


def test_batch_sizes_and_discards():
    Y = np.random.default_rng(0).standard_normal((11, 2))
    split = split_samples(Y, 0, 1, SMALL, seed=1)
    assert split.batches.shape == (3, 3)
    assert split.discarded == ()
    split = split_samples(np.vstack([Y, Y[:1]]), 4, 7, SMALL, seed=1)
    assert split.batches.shape == (3, 3) and len(split.discarded) == 1
    used = set(split.batches.ravel().tolist()) | set(split.discarded)
    assert used == set(range(12)) - {4, 7}


def test_copies_recombine_to_the_data(small_instance):
    split = split_samples(small_instance, 0, 1, SMALL, seed=3)
    np.testing.assert_allclose(split.copies.sum(axis=0) / math.sqrt(3), small_instance.Y, atol=1e-12)


def test_batch_rows_put_the_pair_first(small_instance):
    split = split_samples(small_instance, 5, 2, SMALL, seed=3)
    rows = split.batch_rows(1)
    np.testing.assert_array_equal(rows[0], split.copies[1, 5])
    np.testing.assert_array_equal(rows[1], split.copies[1, 2])
    assert rows.shape == (2 + split.batch_size, 3)


def test_split_errors(small_instance):
    with pytest.raises(InvalidParamsError):
        split_samples(small_instance, 3, 3, SMALL, seed=0)
    with pytest.raises(InsufficientSamplesError):
        split_samples(np.zeros((4, 2)), 0, 1, SMALL, seed=0)


# -- decisions -------------------------------------------------------------------


def test_threshold_is_half_the_conditional_mean():
    cfg = EstimatorConfig(L=1, M=1, lam=3, delta=4.0, K=2)
    expected = 0.5 * 20 * (16 / 3) ** 4 / 2
    assert mom_threshold(cfg, 20) == pytest.approx(expected)
    assert mom_threshold(EstimatorConfig(L=1, M=1, lam=3, delta=4.0, K=2, override_threshold=5), 20) == 5.0


def test_median_decides(small_instance):
    cfg = EstimatorConfig(L=1, M=1, lam=3, delta=2.0, K=2, override_threshold=2.0)
    split = split_samples(small_instance, 0, 1, cfg, seed=0)
    assert mom_decision(split, cfg, per_batch=[1.0, 5.0, 3.0]).x_hat == 1
    assert mom_decision(split, cfg, per_batch=[1.0, 5.0, 1.5]).x_hat == 0
    assert mom_decision(split, cfg, per_batch=[-4.0, -1.0, 0.0]).x_hat == 0


FIVE_BATCHES = EstimatorConfig(L=1, M=1, lam=5, delta=2.0, K=2)
FIVE_SPLIT = split_samples(np.random.default_rng(0).standard_normal((12, 2)), 0, 1, FIVE_BATCHES, seed=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=5, max_size=5), st.randoms(use_true_random=False))
def test_decision_ignores_batch_order(values, random):
    cfg, split = FIVE_BATCHES, FIVE_SPLIT
    shuffled = list(values)
    random.shuffle(shuffled)
    a, b = mom_decision(split, cfg, values), mom_decision(split, cfg, shuffled)
    assert (a.x_hat, a.median_T) == (b.x_hat, b.median_T)


def test_decision_uses_one_statistic_per_batch(small_instance):
    split = split_samples(small_instance, 0, 1, SMALL, seed=2)
    decision = mom_decision(split, SMALL)
    assert decision.per_batch_T == tuple(t_statistic(split, ell, SMALL) for ell in range(3))
    assert decision.as_dict()["per_batch_T"] == list(decision.per_batch_T)


def test_estimate_is_seeded(small_instance):
    a = estimate_x(small_instance, 0, 1, SMALL, seed=9)
    b = estimate_x(small_instance, 0, 1, SMALL, seed=9)
    assert a == b


@pytest.mark.slow
def test_statistic_mean_given_same_group():
    p = ModelParams(n=62, d=2, K=2, delta=4.0)
    cfg = EstimatorConfig(L=1, M=1, lam=3, delta=4.0, K=2)
    mu = sample_means(p, seed=0)
    batch = sample_conditional(p, mu, (0, 0), (1, 1), 2000, seed=1)
    values = np.array([t_statistic(split_samples(Y, 0, 1, cfg, make_rng(2, t)), 0, cfg) for t, Y in enumerate(batch.Y)])
    expected = gstar_conditional_mean(cfg.template, MomentParams(n=22, d=2, K=2, delta=4.0), batch_size=20, shrink=3)
    se = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean() - expected) <= 4 * se


@pytest.mark.slow
def test_statistic_is_centred_without_signal():
    p = ModelParams(n=20, d=2, K=2, delta=0.0)
    cfg = EstimatorConfig(L=1, M=1, lam=3, delta=0.0, K=2)
    values = []
    for t in range(2000):
        inst = sample_instance(p, make_rng(5, t))
        values.append(t_statistic(split_samples(inst, 0, 1, cfg, make_rng(6, t)), 0, cfg))
    values = np.array(values)
    assert abs(values.mean()) <= 4 * values.std(ddof=1) / math.sqrt(values.size)


def _decision_rates(delta: float, trials: int = 300) -> tuple[float, float, float]:
    """Error, and x_hat = 1 rates among same-group and different-group pairs."""
    p = ModelParams(n=62, d=2, K=2, delta=delta)
    cfg = EstimatorConfig(L=1, M=1, lam=3, delta=delta, K=2)
    x, x_hat = [], []
    for t in range(trials):
        inst = sample_instance(p, make_rng(100 + t, 0))
        x.append(int(inst.kstar[0] == inst.kstar[1]))
        x_hat.append(estimate_x(inst, 0, 1, cfg, make_rng(100 + t, 1)).x_hat)
    x, x_hat = np.array(x, dtype=bool), np.array(x_hat, dtype=bool)
    return float(np.mean(x != x_hat)), float(x_hat[x].mean()), float(x_hat[~x].mean())


@pytest.mark.slow
def test_decisions_improve_with_signal():
    errors = {delta: _decision_rates(delta)[0] for delta in (0.0, 2.0, 3.0, 4.0)}
    assert errors[2.0] >= errors[3.0] >= errors[4.0]
    assert errors[4.0] <= errors[0.0] - 0.1
    _, same, different = _decision_rates(4.0)
    assert different <= 0.1
    assert same >= different + 0.15


# -- partitions ------------------------------------------------------------------


def test_components_of_true_pairs_give_the_groups(small_instance):
    kstar = small_instance.kstar
    n = kstar.size
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if kstar[i] == kstar[j]]
    assert cluster_error(labels_from_components(n, edges), kstar) == 0.0


def test_one_flipped_pair_merges_two_groups():
    edges = [(0, 1), (2, 3), (4, 5)]
    assert labels_from_components(6, edges).max() == 2
    merged = labels_from_components(6, edges + [(1, 2)])
    assert merged.max() == 1
    assert merged[0] == merged[3]


@pytest.mark.parametrize("threshold, components", [(-math.inf, 1), (math.inf, 12)])
def test_pairwise_partition_extremes(small_instance, threshold, components):
    cfg = EstimatorConfig(L=1, M=1, lam=3, delta=2.0, K=2, override_threshold=threshold)
    result = pairwise_partition(small_instance, cfg, seed=0)
    assert result.n_components == components
    assert result.degenerate
    assert len(result.decisions) == 66


def test_robust_margin_needs_a_clear_win(small_instance):
    loose = EstimatorConfig(L=1, M=1, lam=3, delta=2.0, K=2, override_threshold=-math.inf, robust=True)
    assert pairwise_partition(small_instance, loose, seed=0).n_components == 1


def test_pairwise_budget(small_instance):
    assert pair_cost(12, SMALL) == 66 * 3 * 3
    with pytest.raises(CapacityError):
        pairwise_partition(small_instance, SMALL, seed=0, budget=10)


def test_recover_partition_splits_signs(small_instance):
    cfg = EstimatorConfig(L=1, M=1, lam=3, delta=2.0, K=2, override_threshold=-math.inf)
    labels = recover_partition(small_instance, cfg, seed=0)
    assert set(labels.tolist()) <= {0, 1}
    assert labels[0] == 1


# -- sign recovery ---------------------------------------------------------------


def test_single_row_is_positive():
    np.testing.assert_array_equal(sign_recovery(np.array([[-3.0, 1.0]]), seed=0), [1])


def test_antipodal_clusters_are_separated():
    n = 50
    delta = math.sqrt(25 * math.log(n))
    for trial in range(100):
        rng = np.random.default_rng(trial)
        b = rng.choice([-1, 1], size=n)
        direction = rng.standard_normal(2)
        mu = delta * direction / np.linalg.norm(direction)
        Y = b[:, None] * mu + rng.standard_normal((n, 2))
        np.testing.assert_array_equal(sign_recovery(Y, seed=trial), b * b[0])


def test_sign_recovery_without_signal_still_labels_everything():
    Y = np.random.default_rng(1).standard_normal((40, 3))
    labels = sign_recovery(Y, seed=0)
    assert set(labels.tolist()) <= {-1, 1}
    assert labels[0] == 1


def test_sign_recovery_rejects_empty_group():
    with pytest.raises(InvalidParamsError):
        sign_recovery(np.empty((0, 2)), seed=0)


# -- cluster error ---------------------------------------------------------------


def test_cluster_error_examples():
    assert cluster_error([0, 0, 1, 1], [0, 0, 1, 1]) == 0.0
    assert cluster_error([1, 1, 0, 0], [0, 0, 1, 1]) == 0.0
    assert cluster_error([0, 1, 0, 1], [0, 0, 1, 1]) == 0.5
    assert cluster_error([[0, 2], [1, 3]], [[0, 1], [2, 3]]) == 0.5


def test_partition_errors():
    with pytest.raises(PartitionError):
        as_label_vector([[0, 1], [1, 2]])
    with pytest.raises(PartitionError):
        cluster_error([0, 1, 1], [0, 1])


def _brute_force(est, true):
    n = len(est)
    groups_e = [frozenset(i for i in range(n) if est[i] == g) for g in sorted(set(est))]
    groups_t = [frozenset(i for i in range(n) if true[i] == g) for g in sorted(set(true))]
    size = max(len(groups_e), len(groups_t))
    groups_e += [frozenset()] * (size - len(groups_e))
    groups_t += [frozenset()] * (size - len(groups_t))
    best = min(
        sum(len(a ^ groups_t[k]) for a, k in zip(groups_e, perm))
        for perm in itertools.permutations(range(size))
    )
    return best / (2 * n)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 5), min_size=n, max_size=n),
    st.lists(st.integers(0, 5), min_size=n, max_size=n),
)))
def test_cluster_error_matches_brute_force(pair):
    est, true = pair
    assert cluster_error(est, true) == pytest.approx(_brute_force(est, true))
