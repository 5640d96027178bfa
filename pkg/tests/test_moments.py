import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.errors import CapacityError, InvalidParamsError, UnsupportedTemplateError
from app.moments import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    DeltaSeries,
    MomentParams,
    MomentReport,
    check_all_inequalities,
    conditional_variances_gstar,
    cross_moment_envelope,
    cross_moment_labeled,
    cross_moment_tilde_envelope,
    falling,
    gram_at_zero_signal,
    gstar_conditional_mean,
    labeled_mean_psibar,
    mean_psibar,
    mean_x_psibar,
    mean_x_psitilde,
    pairing_quantities,
    second_moment_psibar,
    signal_threshold,
    variance_proxy,
    variance_ratio_bound,
    verdict_for,
    zero_signal_cross_moment,
)
from app.multigraph import Template, build_gstar, enumerate_templates, prune

EDGELESS = Template(num_nodes=2, edges=())
LOOP_V1 = Template.from_text("nodes 2\n1 1\n")
TWO_LOOPS = Template.from_text("nodes 2\n1 1\n2 2\n")
EVEN_DEGREE2 = Template.from_text("nodes 3\n1 3\n1 3\n")
BASE = ((0, 0), (1, 1))


def test_delta_series_is_exact():
    s = DeltaSeries()
    s.add(1, Fraction(1, 3))
    s.add(1, Fraction(2, 3))
    s.add(0, 0)
    assert s.terms == {1: Fraction(1)}
    assert s.scaled(3).evaluate(2.0) == 12.0
    assert not DeltaSeries()


def test_falling():
    assert falling(6, 2) == 30
    assert falling(4, 0) == 1
    assert falling(3, 5) == 0


# -- first moments -------------------------------------------------------------


def test_double_edge_mean(double_edge, small_params):
    assert mean_psibar(double_edge, small_params) == pytest.approx(0.5)
    assert mean_x_psibar(double_edge, small_params) == pytest.approx(0.5)


def test_gstar_mean_given_same_group(small_params):
    assert mean_x_psibar(build_gstar(1, 1), small_params) == pytest.approx(1.0)
    assert mean_x_psitilde(build_gstar(1, 1), small_params) == pytest.approx(0.5)


def test_odd_templates_have_zero_mean(single_edge, small_params):
    assert mean_psibar(single_edge, small_params) == 0.0
    assert mean_x_psibar(single_edge, small_params) == 0.0


def test_edgeless_and_disconnected_psitilde(small_params):
    assert mean_x_psitilde(EDGELESS, small_params) == pytest.approx(0.5)
    assert mean_x_psitilde(TWO_LOOPS, small_params) == 0.0


def test_degree2_mean_only_known_for_square_case():
    assert mean_psibar(EVEN_DEGREE2, MomentParams(n=6, d=2, K=2, delta=1.0)) == 0.0
    assert mean_psibar(EVEN_DEGREE2, MomentParams(n=6, d=3, K=2, delta=0.0)) == 0.0
    with pytest.raises(UnsupportedTemplateError):
        mean_psibar(EVEN_DEGREE2, MomentParams(n=6, d=3, K=2, delta=1.0))


def test_mean_counts_labelings():
    p = MomentParams(n=7, d=3, K=3, delta=1.2)
    t = build_gstar(1, 3)
    assert mean_psibar(t, p) == pytest.approx(falling(5, 3) * labeled_mean_psibar(t, p))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3.0))
def test_means_are_homogeneous_in_delta(c):
    t = build_gstar(1, 1)
    unit = MomentParams(n=6, d=2, K=2, delta=1.0)
    scaled = MomentParams(n=6, d=2, K=2, delta=c)
    assert mean_psibar(t, scaled) == pytest.approx(c ** (2 * t.num_edges) * mean_psibar(t, unit), rel=1e-12)
    assert mean_x_psibar(t, scaled) == pytest.approx(c ** (2 * t.num_edges) * mean_x_psibar(t, unit), rel=1e-12)


def test_gstar_conditional_mean_for_split_batches():
    t = build_gstar(1, 1)
    p = MomentParams(n=22, d=2, K=2, delta=4.0)
    expected = 20 * 4.0**8 / (3**4 * 2)
    assert gstar_conditional_mean(t, p, batch_size=20, shrink=3) == pytest.approx(expected)
    assert gstar_conditional_mean(t, p) == pytest.approx(20 * 4.0**8 / 2)


# -- cross and second moments --------------------------------------------------


def test_single_edge_cross_moment(single_edge):
    p = MomentParams(n=6, d=3, K=2, delta=1.5)
    expected = p.d + 2 * p.delta**2 + p.delta**4 / p.K
    assert cross_moment_labeled(single_edge, [0, 1], single_edge, [0, 1], p) == pytest.approx(expected)
    assert second_moment_psibar(single_edge, p) == pytest.approx(expected)


def test_odd_against_even_is_zero(single_edge, double_edge, small_params):
    assert cross_moment_labeled(single_edge, [0, 1], double_edge, [0, 1], small_params) == 0.0


def test_cross_moment_rejects_degree2(degree2_path, small_params):
    with pytest.raises(UnsupportedTemplateError):
        cross_moment_labeled(degree2_path, [0, 1, 2], degree2_path, [0, 1, 2], small_params)


def test_cross_moment_rejects_non_injective_labels(small_params):
    t = build_gstar(1, 1)
    with pytest.raises(InvalidParamsError):
        cross_moment_labeled(t, [0, 1, 0], t, [0, 1, 2], small_params)


def test_disjoint_labelings_force_the_terminal_matching(small_params):
    t = build_gstar(1, 1)
    shared = cross_moment_labeled(t, [0, 1, 2], t, [0, 1, 2], small_params)
    disjoint = cross_moment_labeled(t, [0, 1, 2], t, [0, 1, 3], small_params)
    assert disjoint < shared


def test_envelope_upper_is_exact_without_degree2(double_edge, small_params):
    env = cross_moment_envelope(double_edge, [0, 1], double_edge, [0, 1], small_params)
    exact = cross_moment_labeled(double_edge, [0, 1], double_edge, [0, 1], small_params)
    assert env.radius > 0
    assert env.upper == pytest.approx(exact)
    assert env.contains(exact)


def test_envelope_of_mixed_parity_is_zero(single_edge, double_edge, small_params):
    env = cross_moment_envelope(single_edge, [0, 1], double_edge, [0, 1], small_params)
    assert (env.center, env.radius) == (0.0, 0.0)


def test_envelope_needs_degree2_nodes_matched(small_params):
    env = cross_moment_envelope(EVEN_DEGREE2, [0, 1, 2], EVEN_DEGREE2, [0, 1, 3], small_params)
    assert (env.center, env.radius) == (0.0, 0.0)


def test_edgeless_second_moment(small_params):
    assert second_moment_psibar(EDGELESS, small_params) == 1.0


def test_second_moment_rejects_degree2(degree2_path, small_params):
    with pytest.raises(UnsupportedTemplateError):
        second_moment_psibar(degree2_path, small_params)


def test_tilde_envelope_edgeless(double_edge, small_params):
    env = cross_moment_tilde_envelope(EDGELESS, EDGELESS, small_params)
    assert (env.center, env.radius) == (1.0, 0.0)
    env = cross_moment_tilde_envelope(EDGELESS, double_edge, small_params)
    assert (env.center, env.radius) == (0.0, 0.0)


@pytest.mark.parametrize(
    "t, p, expected",
    [
        ("nodes 2\n1 2\n1 2\n", MomentParams(n=6, d=2, K=2, delta=1.0), 8.0),
        ("nodes 2\n", MomentParams(n=6, d=2, K=2, delta=1.0), 1.0),
        ("nodes 2\n1 1\n", MomentParams(n=5, d=3, K=2, delta=1.0), 6.0),
        ("nodes 3\n1 3\n1 3\n2 3\n2 3\n", MomentParams(n=6, d=2, K=2, delta=1.0), 4 * 16 * 4.0),
    ],
)
def test_variance_proxy(t, p, expected):
    assert variance_proxy(Template.from_text(t), p) == expected


@pytest.mark.parametrize("d", [2, 3, 5])
def test_zero_signal_gram_diagonal_of_double_edge(double_edge, d):
    p = MomentParams(n=6, d=d, K=2, delta=0.0)
    assert zero_signal_cross_moment(double_edge, double_edge, p) == 2 * d**2 + 2 * d
    assert gram_at_zero_signal(double_edge, double_edge, p) == pytest.approx(1 + 1 / d)


def test_zero_signal_gram_off_diagonal(double_edge):
    p = MomentParams(n=6, d=2, K=2, delta=0.0)
    assert gram_at_zero_signal(EDGELESS, EDGELESS, p) == 1.0
    assert gram_at_zero_signal(double_edge, LOOP_V1, p) == 0.0


# -- double chain with fastener --------------------------------------------------


def test_conditional_variances_are_ordered():
    var0, var1 = conditional_variances_gstar(1, 1, MomentParams(n=8, d=2, K=2, delta=1.5))
    assert 0 < var0 <= var1


def test_conditional_variances_coincide_without_signal():
    var0, var1 = conditional_variances_gstar(1, 1, MomentParams(n=8, d=2, K=2, delta=0.0))
    assert var0 == pytest.approx(var1)


def test_conditional_variances_guards():
    with pytest.raises(InvalidParamsError):
        conditional_variances_gstar(1, 1, MomentParams(n=8, d=3, K=2, delta=1.0))
    with pytest.raises(CapacityError):
        conditional_variances_gstar(1, 5, MomentParams(n=8, d=2, K=2, delta=1.0))


def test_variance_ratio_bound_in_the_calibrated_regime():
    L = M = 24
    K, n = 1000, 10**16
    delta = math.sqrt(signal_threshold(L, M, K, n)) * 1.0001
    bound = variance_ratio_bound(L, M, MomentParams(n=n, d=K, K=K, delta=delta))
    assert bound.conditions_hold
    assert bound.value <= 1 / 16
    assert bound.value == pytest.approx(1e4 * 26**4 * K / n + 4 * M**2 * L**2 * K / n, rel=1e-3)


def test_variance_ratio_bound_flags_weak_signal():
    bound = variance_ratio_bound(24, 24, MomentParams(n=10**16, d=1000, K=1000, delta=10.0))
    assert not bound.signal_condition
    assert math.isfinite(bound.value)
    assert not variance_ratio_bound(1, 1, MomentParams(n=100, d=2, K=2, delta=0.0)).signal_condition


def test_variance_ratio_bound_large_signal_limit():
    L, M, K, n = 1, 1, 2, 10**6
    bound = variance_ratio_bound(L, M, MomentParams(n=n, d=K, K=K, delta=1e12))
    assert bound.value == pytest.approx(1e4 * (M + 2) ** 4 * K / n + 4 * M**2 * L**2 * K / n, rel=1e-9)
    assert not bound.m_condition


# -- combinatorial inequalities ----------------------------------------------------


def test_no_violations_on_small_even_templates():
    report = check_all_inequalities(enumerate_templates(2, even_only=True))
    assert report.cases > 0
    assert report.ok, report.violations[:3]
    assert report.min_B == 0 and report.min_C == 0


@pytest.mark.slow
def test_no_violations_on_even_templates_up_to_three_edges():
    report = check_all_inequalities(enumerate_templates(3, even_only=True))
    assert report.cases > 0
    assert report.ok, report.violations[:3]
    assert report.min_B >= 0 and report.min_C >= 0


def test_perfect_and_empty_pairings(double_edge):
    perfect = prune(double_edge, double_edge, BASE, ((0, 0), (2, 2), (1, 1), (3, 3)))
    q = pairing_quantities(double_edge, double_edge, perfect, star=True)
    assert (q.b0, q.C) == (0, 0)
    empty = prune(double_edge, double_edge, BASE, ())
    assert pairing_quantities(double_edge, double_edge, empty, star=True).B == 0


# -- verdicts --------------------------------------------------------------------


@pytest.mark.parametrize(
    "closed, estimate, se, expected",
    [
        (1.0, 1.001, 0.001, PASS),
        (1.0, 2.0, 0.01, FAIL),
        (1.0, 1.0, 1.0, INCONCLUSIVE),
        (1.0, float("nan"), 0.1, FAIL),
        (0.0, 0.0005, 0.0002, PASS),
    ],
)
def test_verdict_for(closed, estimate, se, expected):
    assert verdict_for(closed, estimate, se) == expected


def test_moment_report_as_dict():
    row = MomentReport("double-edge", 0.5, 0.49, 0.01, 1000).as_dict()
    assert row["verdict"] == PASS
    assert row["n_trials"] == 1000
