import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as scipy_stats

from nutriscreen.errors import DataError
from nutriscreen.stats import (
    anova_oneway,
    bartlett,
    chi2_sf,
    compare_pipelines,
    f_sf,
    shapiro_wilk,
    studentized_range_cdf,
    studentized_range_critical,
    t_sf_two_sided,
    tukey_hsd,
    welch_t,
    wilcoxon_ranksum,
)


def _fixed(seed, size, loc=0.0, scale=1.0):
    return np.random.default_rng(seed).normal(loc, scale, size)


# --- Shapiro-Wilk -----------------------------------------------------------

def test_shapiro_normal_fixture_agrees_with_reference():
    x = _fixed(2, 10)
    mine = shapiro_wilk(x)
    ref = scipy_stats.shapiro(x)
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-4)
    assert mine.p_value > 0.05


@pytest.mark.parametrize("n", [3, 4, 5, 8, 11, 12, 25, 60, 300])
def test_shapiro_reference_across_sizes(n):
    x = _fixed(n, n)
    mine = shapiro_wilk(x)
    ref = scipy_stats.shapiro(x)
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-4)


def test_shapiro_sign_symmetry():
    x = _fixed(7, 14)
    x = np.concatenate([x, -x])  # symmetric sample
    assert shapiro_wilk(x).statistic == pytest.approx(
        shapiro_wilk(-x).statistic, abs=1e-12
    )


def test_shapiro_bimodal_fixture_rejects():
    x = np.concatenate([np.zeros(10), np.full(10, 100.0)])
    x = x + _fixed(3, 20) * 0.1
    mine = shapiro_wilk(x)
    ref = scipy_stats.shapiro(x)
    assert mine.p_value < 0.05
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-4)


def test_shapiro_rejects_constant_and_bad_sizes():
    with pytest.raises(DataError):
        shapiro_wilk(np.ones(10))
    with pytest.raises(DataError):
        shapiro_wilk(np.array([1.0, 2.0]))


# --- Bartlett ----------------------------------------------------------------

def test_bartlett_identical_groups():
    g = _fixed(4, 10)
    result = bartlett([g, g.copy(), g.copy()])
    assert result.statistic == pytest.approx(0.0, abs=1e-12)
    assert result.p_value == pytest.approx(1.0)


def test_bartlett_detects_variance_ratio_100():
    a = _fixed(5, 20, scale=1.0)
    b = _fixed(6, 20, scale=10.0)
    mine = bartlett([a, b])
    ref = scipy_stats.bartlett(a, b)
    assert mine.p_value < 0.05
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-4)


def test_bartlett_scale_invariance():
    groups = [_fixed(8, 12), _fixed(9, 15, scale=2.0)]
    s1 = bartlett(groups).statistic
    s2 = bartlett([7.3 * g for g in groups]).statistic
    assert s1 == pytest.approx(s2, rel=1e-12)


def test_bartlett_zero_variance_group_is_error():
    with pytest.raises(DataError):
        bartlett([np.ones(5), _fixed(1, 5)])


# --- ANOVA -------------------------------------------------------------------

def test_anova_equal_means_give_zero_f():
    g = np.array([1.0, 2.0, 3.0])
    result = anova_oneway([g, g + 0.0, g.copy()])
    assert result.statistic == pytest.approx(0.0, abs=1e-12)


def test_anova_textbook_fixture_matches_sum_of_squares_oracle():
    groups = [
        np.array([6.0, 8.0, 4.0, 5.0, 3.0, 4.0]),
        np.array([8.0, 12.0, 9.0, 11.0, 6.0, 8.0]),
        np.array([13.0, 9.0, 11.0, 8.0, 7.0, 12.0]),
    ]
    mine = anova_oneway(groups)
    # direct sum-of-squares computation
    all_vals = np.concatenate(groups)
    grand = all_vals.mean()
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
    f_oracle = (ssb / 2) / (ssw / 15)
    assert mine.statistic == pytest.approx(f_oracle, rel=1e-12)
    ref = scipy_stats.f_oneway(*groups)
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-4)


def test_anova_large_shift_is_significant():
    a = _fixed(10, 12)
    b = _fixed(11, 12)
    c = _fixed(12, 12) + 10.0
    result = anova_oneway([a, b, c])
    assert result.p_value < 0.001


def test_anova_all_identical_values_is_f_zero_p_one():
    g = np.ones(5)
    result = anova_oneway([g, g.copy()])
    assert result.statistic == 0.0 and result.p_value == 1.0


def test_anova_location_shift_invariance():
    groups = [_fixed(13, 10), _fixed(14, 12) + 0.5]
    s1 = anova_oneway(groups).statistic
    s2 = anova_oneway([g + 100.0 for g in groups]).statistic
    assert s1 == pytest.approx(s2, rel=1e-9)


# --- Tukey HSD ---------------------------------------------------------------

def test_tukey_identical_groups_nothing_significant():
    g = _fixed(15, 10)
    for r in tukey_hsd([g, g.copy(), g.copy()]):
        assert not r.significant


def test_studentized_range_critical_matches_published_tables():
    # classic table values for alpha = 0.05 and 0.01
    assert studentized_range_critical(0.05, 3, 12) == pytest.approx(3.77, abs=0.01)
    assert studentized_range_critical(0.05, 2, 10) == pytest.approx(3.15, abs=0.01)
    assert studentized_range_critical(0.05, 4, 20) == pytest.approx(3.96, abs=0.01)
    assert studentized_range_critical(0.01, 3, 12) == pytest.approx(5.05, abs=0.01)


def test_studentized_range_cdf_against_reference():
    for q, k, df in ((2.0, 3, 10), (3.5, 3, 12), (4.5, 4, 30), (1.0, 2, 5)):
        mine = studentized_range_cdf(q, k, df)
        ref = scipy_stats.studentized_range.cdf(q, k, df)
        assert mine == pytest.approx(ref, abs=1e-4)


def test_tukey_pvalues_against_reference():
    groups = [_fixed(20, 10), _fixed(21, 10) + 2.0, _fixed(22, 10)]
    mine = tukey_hsd(groups)
    ref = scipy_stats.tukey_hsd(*groups)
    for r in mine:
        i, j = r.extras["pair"]
        assert r.p_value == pytest.approx(ref.pvalue[i, j], abs=1e-4)


def test_tukey_significant_pair_implies_anova_significant():
    rng = np.random.default_rng(23)
    for _ in range(10):
        groups = [rng.normal(rng.uniform(-1, 1), 1.0, size=rng.integers(5, 12)) for _ in range(3)]
        tukey = tukey_hsd(groups)
        if any(r.significant for r in tukey):
            assert anova_oneway(groups).significant


# --- Welch -------------------------------------------------------------------

def test_welch_identical_samples():
    x = _fixed(30, 12)
    result = welch_t(x, x.copy())
    assert result.statistic == 0.0 and result.p_value == 1.0


def test_welch_fixture_against_reference():
    x = _fixed(31, 10, loc=0.0)
    y = _fixed(32, 16, loc=0.8, scale=2.0)
    mine = welch_t(x, y)
    ref = scipy_stats.ttest_ind(x, y, equal_var=False)
    assert mine.statistic == pytest.approx(ref.statistic, abs=1e-6)
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-4)
    assert mine.df == pytest.approx(ref.df, abs=1e-6)


def test_welch_antisymmetry():
    x, y = _fixed(33, 9), _fixed(34, 14) + 1.0
    a = welch_t(x, y)
    b = welch_t(y, x)
    assert a.statistic == pytest.approx(-b.statistic, rel=1e-12)
    assert a.p_value == pytest.approx(b.p_value, rel=1e-12)


# --- Wilcoxon rank sum -------------------------------------------------------

def test_wilcoxon_disjoint_ranges_hit_combinatorial_floor():
    x = np.array([1.0, 2.0, 3.0])
    y = np.array([10.0, 11.0, 12.0, 13.0])
    result = wilcoxon_ranksum(x, y, alternative="less")
    assert result.extras["method"] == "exact"
    assert result.p_value == pytest.approx(1.0 / math.comb(7, 3))


def test_wilcoxon_identical_multisets_give_p_one():
    x = np.array([1.0, 2.0, 2.0, 5.0])
    result = wilcoxon_ranksum(x, x.copy())
    assert result.extras["method"] == "exact"
    assert result.p_value == pytest.approx(1.0)


def _exact_ranksum_bruteforce(x, y):
    """Enumerate every assignment of labels to the pooled sample."""
    pooled = np.concatenate([x, y])
    ranks = scipy_stats.rankdata(pooled)
    observed = ranks[: len(x)].sum()
    mu = len(x) * (len(pooled) + 1) / 2
    count = hits = 0
    for subset in combinations(range(len(pooled)), len(x)):
        w = ranks[list(subset)].sum()
        count += 1
        if abs(w - mu) >= abs(observed - mu) - 1e-12:
            hits += 1
    return hits / count


@pytest.mark.parametrize("seed,nx,ny", [(1, 4, 5), (2, 5, 5), (3, 3, 6), (4, 6, 6)])
def test_wilcoxon_exact_matches_label_enumeration(seed, nx, ny):
    rng = np.random.default_rng(seed)
    x = np.round(rng.normal(size=nx), 1)
    y = np.round(rng.normal(0.5, 1.0, size=ny), 1)
    mine = wilcoxon_ranksum(x, y)
    assert mine.extras["method"] == "exact"
    assert mine.p_value == pytest.approx(_exact_ranksum_bruteforce(x, y), abs=1e-12)


def test_wilcoxon_normal_approximation_with_ties_matches_reference():
    rng = np.random.default_rng(40)
    x = np.round(rng.normal(size=30), 1)
    y = np.round(rng.normal(0.4, 1.0, size=24), 1)
    mine = wilcoxon_ranksum(x, y)
    assert mine.extras["method"] == "normal"
    ref = scipy_stats.mannwhitneyu(
        x, y, alternative="two-sided", method="asymptotic", use_continuity=False
    )
    assert mine.p_value == pytest.approx(ref.pvalue, abs=1e-10)


# --- routing -----------------------------------------------------------------

def test_compare_routes_normal_samples_to_welch():
    result = compare_pipelines(_fixed(50, 10), _fixed(51, 12))
    assert result.name == "welch_t"
    assert result.extras["routing"]["shapiro_a"]["p"] > 0.05


def test_compare_routes_heavy_tail_to_wilcoxon():
    rng = np.random.default_rng(52)
    heavy = rng.standard_cauchy(40) ** 3
    result = compare_pipelines(heavy, _fixed(53, 12))
    assert result.name == "wilcoxon_ranksum"


def test_compare_identical_samples_p_one_either_route():
    x = _fixed(54, 10)
    result = compare_pipelines(x, x.copy())
    assert result.p_value == pytest.approx(1.0)


# --- distribution helpers ----------------------------------------------------

def test_cdf_helpers_monotone_on_grids():
    ts = np.linspace(0.0, 8.0, 40)
    t_tail = [t_sf_two_sided(t, 7.0) for t in ts]
    assert all(a >= b - 1e-12 for a, b in zip(t_tail, t_tail[1:]))
    fs = np.linspace(0.01, 20.0, 40)
    f_tail = [f_sf(f, 3, 12) for f in fs]
    assert all(a >= b - 1e-12 for a, b in zip(f_tail, f_tail[1:]))
    xs = np.linspace(0.0, 30.0, 40)
    chi_tail = [chi2_sf(x, 4) for x in xs]
    assert all(a >= b - 1e-12 for a, b in zip(chi_tail, chi_tail[1:]))
    qs = np.linspace(0.1, 8.0, 25)
    sr = [studentized_range_cdf(q, 3, 12) for q in qs]
    assert all(b >= a - 1e-12 for a, b in zip(sr, sr[1:]))


@given(st.floats(0.1, 6.0), st.integers(3, 40))
def test_t_tail_in_unit_interval(t, df):
    p = t_sf_two_sided(t, float(df))
    assert 0.0 <= p <= 1.0
