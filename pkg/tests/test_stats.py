import pytest
from scipy import stats

from imml_lab.errors import DegenerateVariance
from imml_lab.stats import significance_test


def test_matches_scipy():
    a = [0.81, 0.84, 0.79, 0.88, 0.83]
    b = [0.78, 0.80, 0.80, 0.82, 0.79]
    result = significance_test(a, b)
    expected = stats.ttest_rel(a, b)
    assert result.t_statistic == pytest.approx(expected.statistic)
    assert result.p_value == pytest.approx(expected.pvalue)
    assert result.mean_diff == pytest.approx(0.032)
    assert result.n == 5 and not result.degenerate


def test_identical_runs_are_not_significant():
    result = significance_test([0.5, 0.6, 0.7], [0.5, 0.6, 0.7])
    assert result.p_value == 1.0
    assert result.degenerate
    assert result.to_dict()["degenerate"] is True


def test_constant_nonzero_difference():
    with pytest.raises(DegenerateVariance) as info:
        significance_test([0.9, 0.9, 0.9], [0.1, 0.1, 0.1])
    assert info.value.mean_diff == pytest.approx(0.8)
    assert info.value.p_value == 0.0


def test_constant_difference_up_to_rounding():
    a, b = [0.3, 0.7, 0.9], [0.1, 0.5, 0.7]
    assert len({x - y for x, y in zip(a, b)}) > 1
    with pytest.raises(DegenerateVariance):
        significance_test(a, b)

    flagged = significance_test(a, b, raise_on_degenerate=False)
    assert flagged.degenerate and flagged.t_statistic is None
    assert flagged.p_value == 0.0
    assert flagged.mean_diff == pytest.approx(0.2)
    assert flagged.to_dict()["t_statistic"] is None


def test_input_checks():
    with pytest.raises(ValueError):
        significance_test([0.1, 0.2], [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        significance_test([0.1], [0.2])
