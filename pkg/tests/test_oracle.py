import math

import numpy as np
import pytest

from app.errors import InvalidParamsError
from app.model import ModelParams
from app.moments import FAIL, MomentParams, mean_x_psibar
from app.multigraph import Template, build_gstar
from app.oracle import (
    CHUNK,
    default_suite,
    mc_conditional_variances,
    mc_mean_psibar,
    mc_mean_psitilde,
    mean_and_se,
    run_case,
    sample_statistic,
    variance_and_se,
)


def test_mean_and_se():
    mean, se = mean_and_se(np.array([1.0, 2.0, 3.0, 4.0]))
    assert mean == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert mean_and_se(np.array([5.0]))[1] == math.inf


def test_variance_and_se_of_constant():
    assert variance_and_se(np.full(10, 3.0)) == (0.0, 0.0)
    assert math.isnan(variance_and_se(np.array([1.0]))[0])


def test_sample_statistic_is_seeded_and_chunked():
    p = ModelParams(n=4, d=2, K=2, delta=1.0)
    stat = lambda Y, x: Y[:, 0, 0] + x  # noqa: E731
    a = sample_statistic(p, CHUNK + 7, 3, stat)
    b = sample_statistic(p, CHUNK + 7, 3, stat)
    assert a.shape == (CHUNK + 7,)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a[:7], sample_statistic(p, 7, 4, stat))


def test_edgeless_mean_is_exact():
    edgeless = Template(num_nodes=2, edges=())
    mean, se = mc_mean_psibar(edgeless, ModelParams(n=5, d=2, K=2, delta=1.0), 100, 0)
    assert (mean, se) == (1.0, 0.0)


def test_centred_polynomial_has_zero_mean(double_edge):
    mean, se = mc_mean_psitilde(double_edge, ModelParams(n=6, d=2, K=2, delta=1.0), 20_000, 8)
    assert abs(mean) <= 4 * se


def test_conditional_variances_need_two_groups():
    with pytest.raises(InvalidParamsError):
        mc_conditional_variances(1, 1, ModelParams(n=6, d=2, K=1, delta=1.0), 10, 0)


def test_suite_names_are_unique():
    names = [case.name for case in default_suite()]
    assert len(names) == len(set(names))


def test_injected_bias_scales_closed_forms():
    plain = {c.name: c for c in default_suite()}
    biased = {c.name: c for c in default_suite(inject_bias=0.25)}
    name = "mean_x_psibar/gstar_1_1"
    assert biased[name].closed_form() == pytest.approx(1.25 * plain[name].closed_form())


@pytest.mark.slow
@pytest.mark.parametrize("case", default_suite(), ids=lambda c: c.name)
def test_closed_forms_agree_with_monte_carlo(case):
    report = run_case(case, seed=20240501, z=4.0)
    assert report.verdict != FAIL, report.as_dict()


@pytest.mark.slow
@pytest.mark.parametrize("template", ["single_edge", "degree2_path"])
def test_odd_and_degree2_templates_carry_no_signal(template, request):
    t = request.getfixturevalue(template)
    mean, se = mc_mean_psibar(t, ModelParams(n=6, d=2, K=2, delta=1.0), 10**6, seed=17, with_x=True)
    assert abs(mean) <= 3 * se


@pytest.mark.slow
def test_biased_closed_form_fails():
    case = {c.name: c for c in default_suite(inject_bias=0.5)}["mean_psibar/double_edge"]
    assert run_case(case, seed=11).verdict == FAIL


@pytest.mark.slow
def test_gstar_mean_with_x_passes_at_three_points():
    t = build_gstar(1, 1)
    for n, delta in ((6, 1.0), (7, 1.2), (8, 0.8)):
        p = MomentParams(n=n, d=2, K=2, delta=delta)
        mean, se = mc_mean_psibar(t, p, 200_000, seed=n, with_x=True)
        assert abs(mean - mean_x_psibar(t, p)) <= 4 * se
