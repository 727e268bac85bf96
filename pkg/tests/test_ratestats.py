import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special
from scipy import stats as sps

from rolldyn import ratestats, study
from rolldyn.ingest import RatingTable
from rolldyn.ratestats import StatsError

rating = st.integers(min_value=10, max_value=100).map(lambda x: x / 10)


def _table(groups):
    values = {}
    crits = ["RAL", "RAH", "TDL", "TDH", "IRM", "ROS", "OR"]
    for s, vals in groups.items():
        for j, v in enumerate(vals):
            values[(s, f"V{j // 7}", crits[j % 7], "liking")] = float(v)
    return RatingTable(values)


def test_symmetric_triple_z_scores():
    std = ratestats.standardize(_table({"s": [6, 7, 8]}))
    assert sorted(std.z.values()) == pytest.approx([-1.0, 0.0, 1.0])
    # a single subject is already on the group scale
    assert sorted(std.table.values.values()) == pytest.approx([6.0, 7.0, 8.0])


def test_identical_subjects_are_a_fixed_point_with_population_scale():
    vals = [5, 6, 8, 3]
    raw = _table({"a": vals, "b": vals})
    std = ratestats.standardize(raw, ddof=0)
    for key, v in std.table.values.items():
        assert v == pytest.approx(raw.values[key], abs=1e-12)


def test_identical_subjects_with_sample_scale_shrink_by_known_factor():
    # pooled sample std over 2n values vs per-subject sample std over n values
    vals = np.array([5.0, 6.0, 8.0, 3.0])
    n = vals.size
    factor = math.sqrt((n - 1) * 2 * n / (n * (2 * n - 1)))
    out = ratestats.standardize_values({"a": vals, "b": vals})
    assert out["a"] == pytest.approx(vals.mean() + factor * (vals - vals.mean()), abs=1e-12)


def test_two_subject_hand_computed_example():
    out = ratestats.standardize_values({"A": [5, 7], "B": [6, 10]})
    sigma = statistics.stdev([5, 7, 6, 10])
    assert sigma == pytest.approx(2.160, abs=5e-4)
    assert out["A"] == pytest.approx([7 - sigma / math.sqrt(2), 7 + sigma / math.sqrt(2)])
    assert out["A"] == pytest.approx([5.47, 8.53], abs=5e-3)


def test_zero_variance_subject_is_an_error():
    with pytest.raises(StatsError, match="zero rating variance"):
        ratestats.standardize(_table({"a": [5, 5, 5], "b": [1, 2, 3]}))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(rating, min_size=3, max_size=9).filter(lambda v: len(set(v)) > 1), min_size=1, max_size=5))
def test_standardization_restores_group_scale(groups):
    n = min(len(g) for g in groups)
    named = {f"s{i}": g[:n] for i, g in enumerate(groups) if len(set(g[:n])) > 1}
    if not named:
        return
    std = ratestats.standardize(_table(named))
    for s, vals in named.items():
        keys = [k for k in std.table.values if k[0] == s]
        out = np.array([std.table.values[k] for k in keys])
        raw = np.array([_table(named).values[k] for k in keys])
        assert out.mean() == pytest.approx(std.mu_tot, abs=1e-9)
        assert out.std(ddof=1) == pytest.approx(std.sigma_tot, abs=1e-9)
        # strictly monotone map: order of distinct ratings preserved
        assert np.array_equal(np.argsort(raw, kind="stable"), np.argsort(out, kind="stable"))


def test_tukey_example():
    assert ratestats.tukey_fences([1, 2, 3, 4, 100]) == (-1.0, 7.0)
    assert ratestats.winsorize([1, 2, 3, 4, 100]).tolist() == [1, 2, 3, 4, 7]


def test_winsorize_examples_are_idempotent():
    for x in ([1, 2, 3, 4, 100], [3.0, 4.0, 5.0, 6.0, 7.0], [2, 9, 5, 5, 6, 5, 4, -20]):
        once = ratestats.winsorize(x)
        assert np.array_equal(ratestats.winsorize(once), once)


def test_winsorize_fences_move_after_clamping():
    # fences are recomputed from the clamped data, so idempotence is not universal
    once = ratestats.winsorize([0.0, 0.0, 0.0, 1.0])
    assert once.tolist() == [0.0, 0.0, 0.0, 0.625]
    assert ratestats.winsorize(once).tolist() == [0.0, 0.0, 0.0, 0.390625]


def test_winsorize_without_outliers_is_identity():
    x = [3.0, 4.0, 5.0, 6.0, 7.0]
    assert ratestats.winsorize(x).tolist() == x


def test_winsorize_needs_four_values():
    with pytest.raises(StatsError):
        ratestats.winsorize([1.0, 2.0, 3.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=30))
def test_winsorize_properties(x):
    x = np.array(x)
    w = ratestats.winsorize(x)
    lo, hi = ratestats.tukey_fences(x)
    outside = (x < lo) | (x > hi)
    assert np.array_equal(w[~outside], x[~outside])
    assert np.all((w[outside] == lo) | (w[outside] == hi))
    assert np.ptp(w) <= np.ptp(x)
    # clamping is monotone: a strict order in x is never inverted
    i, j = np.nonzero(x[:, None] < x[None, :])
    assert np.all(w[i] <= w[j])


def test_perfect_linear_pair():
    x = np.arange(7.0)
    cm = ratestats.correlate(np.column_stack([x, 3 * x + 1]), labels=["a", "b"])
    assert cm.r[1, 0] == pytest.approx(1.0)
    assert cm.p[1, 0] == pytest.approx(0.0, abs=1e-12)


def test_pvalue_matches_scipy():
    rng = np.random.default_rng(4)
    x, y = rng.standard_normal((2, 7))
    r, p = sps.pearsonr(x, y)
    assert ratestats.pearson_pvalue(r, 7) == pytest.approx(p, rel=1e-9)


def test_critical_r_for_seven_observations():
    assert ratestats.critical_r(7) == pytest.approx(0.7545, abs=1e-4)
    cm = ratestats.CorrelationMatrix.from_coefficients([[1, 0.86], [0.86, 1]], 7, ["a", "b"])
    assert cm.significant_pairs() == [("b", "a")]
    cm = ratestats.CorrelationMatrix.from_coefficients([[1, 0.73], [0.73, 1]], 7, ["a", "b"])
    assert cm.significant_pairs() == []


def test_correlation_invariant_under_positive_affine_maps():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((7, 3))
    r1 = ratestats.correlate(A).r
    r2 = ratestats.correlate(A * [2.0, 0.5, 7.0] + [1.0, -3.0, 4.0]).r
    assert np.allclose(r1, r2, atol=1e-12)


def test_constant_column_gives_undefined_coefficients():
    A = np.column_stack([np.arange(5.0), np.ones(5)])
    cm = ratestats.correlate(A)
    assert math.isnan(cm.r[1, 0]) and not cm.significant[1, 0]


def test_intensity_pattern_with_seven_observations():
    rows, _, r = study.published_correlation("intensity")
    cm = ratestats.CorrelationMatrix.from_coefficients(r, 7, rows)
    assert set(cm.significant_pairs()) == {("TDL", "RAL"), ("ROS", "IRM")}


def test_liking_pattern_with_seven_observations():
    rows, _, r = study.published_correlation("liking")
    cm = ratestats.CorrelationMatrix.from_coefficients(r, 7, rows)
    assert set(cm.significant_pairs()) == {
        ("TDL", "RAL"), ("IRM", "RAL"), ("TDH", "RAH"), ("ROS", "IRM"), ("OR", "IRM"), ("OR", "ROS"),
    }


def test_correlation_csv(tmp_path):
    cm = ratestats.correlate(np.random.default_rng(0).standard_normal((7, 3)), labels=list("abc"))
    cm.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "row,col,r,p,significant,n,alpha"
    assert len(lines) == 10


def _welch_oracle(a, b):
    ma, mb = statistics.fmean(a), statistics.fmean(b)
    va, vb = statistics.variance(a) / len(a), statistics.variance(b) / len(b)
    t = (ma - mb) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return t, df, 2 * special.stdtr(df, -abs(t))


def test_welch_textbook_example():
    a, b = [7.1, 7.3, 7.5, 7.7], [6.2, 6.5, 6.4, 6.6]
    res = ratestats.welch_ttest(a, b)
    t, df, p = _welch_oracle(a, b)
    assert res.t == pytest.approx(t, abs=1e-10)
    assert res.df == pytest.approx(df, abs=1e-10)
    assert res.p == pytest.approx(p, abs=1e-10)
    ref = sps.ttest_ind(a, b, equal_var=False)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-9)


def test_identical_samples():
    res = ratestats.welch_ttest([1, 2, 3, 4], [1, 2, 3, 4])
    assert res.t == 0.0 and res.p == pytest.approx(1.0)


def test_gross_separation():
    assert ratestats.welch_ttest([1, 2, 3, 4], [11, 12, 13, 14]).p < 1e-3


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=12).filter(lambda v: np.ptp(v) > 1e-3),
    st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=12).filter(lambda v: np.ptp(v) > 1e-3),
)
def test_welch_is_symmetric_and_matches_oracle(a, b):
    ab, ba = ratestats.welch_ttest(a, b), ratestats.welch_ttest(b, a)
    assert ab.p == ba.p and abs(ab.t) == abs(ba.t)
    t, df, p = _welch_oracle(a, b)
    assert ab.t == pytest.approx(t, abs=1e-10, rel=1e-10)
    assert ab.p == pytest.approx(p, abs=1e-10)


def test_pairwise_ttests_cover_lower_triangle():
    res = ratestats.pairwise_ttests({"a": [1, 2, 3], "b": [2, 3, 5], "c": [0, 1, 1.5]})
    assert set(res) == {("b", "a"), ("c", "a"), ("c", "b")}


def test_rmse_modes():
    d = np.array([0.3, 0, 0, 0, 0, 0])
    assert ratestats.rmse(d, np.zeros(6), "sum") == pytest.approx(0.3)
    assert ratestats.rmse(d, np.zeros(6), "mean") == pytest.approx(0.122, abs=5e-4)
    assert ratestats.rmse(d, d, "sum") == 0.0 and ratestats.rmse(d, d, "mean") == 0.0
    with pytest.raises(StatsError, match="length mismatch"):
        ratestats.rmse([1, 2], [1])
