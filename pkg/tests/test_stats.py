import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from coughxai.errors import ConfigError, DataError, DegenerateInputError
from coughxai.features import FEATURE_NAMES
from coughxai.fixture import cohort_groups_text
from coughxai.stats import (
    GroupConfig,
    GroupSpec,
    TestKind,
    TestResult,
    boxplot_summary,
    compare_groups,
    is_gaussian,
    mann_whitney_u,
    run_protocol,
    shapiro_wilk,
    student_t_unpaired,
)
from oracles import mann_whitney_enumeration


# -- Shapiro-Wilk ------------------------------------------------------------


def test_shapiro_examples():
    assert shapiro_wilk([-1.28, -0.52, 0.0, 0.52, 1.28]).p_value > 0.05
    assert shapiro_wilk([1, 1, 1, 1, 100]).p_value < 0.05
    with pytest.raises(ValueError):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(DegenerateInputError):
        shapiro_wilk([3.0, 3.0, 3.0])


@pytest.mark.parametrize("n", [3, 4, 5, 6, 8, 11, 12, 17, 30, 50, 200])
def test_shapiro_matches_scipy(n):
    rng = np.random.default_rng(n)
    for sample in (rng.standard_normal(n), rng.exponential(size=n), rng.uniform(size=n)):
        w, p = shapiro_wilk(sample)
        ref = sps.shapiro(sample)
        assert w == pytest.approx(ref.statistic, abs=1e-5)
        assert p == pytest.approx(ref.pvalue, abs=1e-4)


def test_shapiro_affine_invariant():
    x = np.random.default_rng(0).standard_normal(15)
    a, b = shapiro_wilk(x), shapiro_wilk(3.5 * x - 20)
    assert a.statistic == pytest.approx(b.statistic, rel=1e-12)
    assert a.p_value == pytest.approx(b.p_value, rel=1e-9)


# -- t-test ------------------------------------------------------------------


def test_t_examples():
    r = student_t_unpaired([1, 2, 3, 4], [1, 2, 3, 4])
    assert r.statistic == 0.0 and r.p_value == 1.0 and r.test_kind is TestKind.STUDENT_T
    shifted = student_t_unpaired([1, 2, 3, 4, 5], [11, 12, 13, 14, 15])
    assert shifted.p_value < 0.001
    with pytest.raises(DegenerateInputError):
        student_t_unpaired([2, 2, 2], [2, 2, 2])
    with pytest.raises(ValueError):
        student_t_unpaired([1], [1, 2])


def test_t_matches_scipy():
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 1, 7), rng.normal(0.5, 2, 9)
    for welch in (False, True):
        r = student_t_unpaired(a, b, welch=welch)
        ref = sps.ttest_ind(a, b, equal_var=not welch)
        assert r.statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-10)
    assert student_t_unpaired(a, b, welch=True).test_kind is TestKind.WELCH_T


def test_t_negation_symmetry():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=6), rng.normal(size=5)
    r, neg = student_t_unpaired(a, b), student_t_unpaired(-a, -b)
    assert neg.statistic == pytest.approx(-r.statistic, rel=1e-12)
    assert neg.p_value == pytest.approx(r.p_value, rel=1e-12)


# -- Mann-Whitney --------------------------------------------------------------


def test_mw_examples():
    assert mann_whitney_u([1, 2], [3, 4]).p_value == pytest.approx(1 / 3, abs=1e-15)
    r = mann_whitney_u(range(1, 7), range(7, 13))
    assert r.p_value == pytest.approx(2 / math.comb(12, 6), rel=1e-12)
    assert r.statistic == 0.0
    assert mann_whitney_u([5, 5, 5], [5, 5]).p_value == 1.0
    with pytest.raises(ValueError):
        mann_whitney_u([], [1])


def samples(max_total=10):
    values = st.integers(0, 6).map(float)
    return st.integers(1, max_total - 1).flatmap(
        lambda na: st.tuples(
            st.lists(values, min_size=na, max_size=na),
            st.lists(values, min_size=1, max_size=max_total - na),
        )
    )


@settings(max_examples=150, deadline=None)
@given(samples())
def test_mw_matches_enumeration(ab):
    a, b = ab
    assert mann_whitney_u(a, b).p_value == pytest.approx(mann_whitney_enumeration(a, b), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(samples(12))
def test_mw_swap_and_monotone_invariance(ab):
    a, b = ab
    p = mann_whitney_u(a, b).p_value
    assert mann_whitney_u(b, a).p_value == pytest.approx(p, abs=1e-12)
    g = lambda v: [math.exp(x) + 3 * x for x in v]  # noqa: E731
    assert mann_whitney_u(g(a), g(b)).p_value == pytest.approx(p, abs=1e-12)


def test_mw_normal_approximation_matches_scipy():
    rng = np.random.default_rng(3)
    a, b = rng.integers(0, 20, 20).astype(float), rng.integers(3, 25, 18).astype(float)
    r = mann_whitney_u(a, b)
    ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert r.statistic == ref.statistic
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_mw_exact_matches_scipy_without_ties():
    rng = np.random.default_rng(4)
    x = rng.permutation(25).astype(float)
    a, b = x[:11], x[11:]
    ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="exact")
    assert mann_whitney_u(a, b).p_value == pytest.approx(ref.pvalue, rel=1e-9)


# -- protocol ------------------------------------------------------------------


def test_protocol_routing():
    gauss_a = [-1.28, -0.52, 0.0, 0.52, 1.28]
    gauss_b = [v + 10 for v in gauss_a]
    assert run_protocol(gauss_a, gauss_b).test_kind is TestKind.STUDENT_T
    assert run_protocol(gauss_a, gauss_b, welch=True).test_kind is TestKind.WELCH_T
    assert run_protocol(gauss_a, [1, 1, 1, 1, 100]).test_kind is TestKind.MANN_WHITNEY_U
    assert run_protocol([1.0, 2.0], gauss_a).test_kind is TestKind.MANN_WHITNEY_U
    assert run_protocol([4, 4, 4], gauss_a).test_kind is TestKind.MANN_WHITNEY_U
    assert not is_gaussian([4, 4, 4])


def test_result_validation():
    with pytest.raises(ValueError):
        TestResult(TestKind.STUDENT_T, 0.0, 1.5)
    r = TestResult("mann_whitney_u", 1, 0.01)
    assert r.significant and r.test_kind is TestKind.MANN_WHITNEY_U
    assert not TestResult(TestKind.STUDENT_T, 0.0, 0.05).significant


# -- groups --------------------------------------------------------------------


COHORT_GROUPS = {
    "G1": (17, 11, 6),
    "G2": (17, 6, 11),
    "G3": (15, 6, 9),
    "G4": (12, 6, 6),
    "G5": (11, 6, 5),
    "G6": (8, 6, 2),
}


def test_cohort_groups():
    cfg = GroupConfig.parse(cohort_groups_text())
    specs = cfg.groups()
    assert [s.name for s in specs] == list(COHORT_GROUPS)
    for s in specs:
        total, na, nb = COHORT_GROUPS[s.name]
        assert (len(s.group_a) + len(s.group_b), len(s.group_a), len(s.group_b)) == (total, na, nb)
    g3 = specs[2]
    assert not ({"P07", "P08"} & g3.group_b)


def test_group_config_errors():
    base = "patient P1 a\npatient P2 b\n"
    for bad in (
        base,
        base + "group G1 a b\n",
        base + "group G1 vs b\n",
        base + "frobnicate x\n",
        base + "patient P1 c\ngroup G1 a vs b\n",
        base + "category c\ngroup G1 a vs b\n",
    ):
        with pytest.raises(ConfigError):
            GroupConfig.parse(bad)
    cfg = GroupConfig.parse(base + "group G1 a vs nope\n")
    with pytest.raises(ConfigError):
        cfg.groups()
    overlap = GroupConfig.parse(base + "group G1 all vs a\n")
    with pytest.raises(ConfigError):
        overlap.groups()
    with pytest.raises(ConfigError):
        GroupConfig.parse(base + "group G1 a vs b\n").groups(["P1", "P9"])


def test_empty_sides_and_subset():
    cfg = GroupConfig.parse(cohort_groups_text())
    pool = [f"P{i:02d}" for i in range(1, 12)]  # chronic patients only
    assert cfg.empty_sides(pool) == ["G1", "G4"]
    with pytest.raises(ValueError):
        GroupSpec("x", set(), {"a"})


def _vectors(rng, patients, offset=0.0):
    out = {}
    for pid in patients:
        out[(pid, 0.5)] = SimpleNamespace(**{n: float(rng.normal()) + offset for n in FEATURE_NAMES})
    return out


def test_compare_groups_cardinality_and_order():
    specs = [GroupSpec("A", {"p1", "p2", "p3"}, {"p4", "p5"}), GroupSpec("B", {"p1"}, {"p5"})]
    feats = _vectors(np.random.default_rng(5), ["p1", "p2", "p3", "p4", "p5"])
    rows = compare_groups(feats, specs, [0.5])
    assert len(rows) == 14
    assert [(r.group, r.feature) for r in rows[:7]] == [("A", n) for n in FEATURE_NAMES]
    assert all(r.threshold == 0.5 for r in rows)
    with pytest.raises(DataError):
        compare_groups(feats, specs, [0.6])


def test_compare_groups_offset_independence():
    rng = np.random.default_rng(6)
    spec = GroupSpec("A", {"a1", "a2", "a3", "a4"}, {"b1", "b2", "b3", "b4", "b5"})
    feats = _vectors(rng, sorted(spec.group_a | spec.group_b))
    shifted = {k: SimpleNamespace(**{n: getattr(v, n) + 1e3 for n in FEATURE_NAMES}) for k, v in feats.items()}
    for r, s in zip(compare_groups(feats, [spec], [0.5]), compare_groups(shifted, [spec], [0.5])):
        assert r.test_kind is s.test_kind
        assert r.p_value == pytest.approx(s.p_value, rel=1e-6, abs=1e-9)


# -- boxplots ------------------------------------------------------------------


def test_boxplot_examples():
    b = boxplot_summary([1, 2, 3, 4, 5])
    assert (b.median, b.q1, b.q3, b.whisker_lo, b.whisker_hi, b.outliers) == (3, 2, 4, 1, 5, ())
    c = boxplot_summary([7, 7, 7])
    assert (c.median, c.q1, c.q3, c.whisker_lo, c.whisker_hi) == (7, 7, 7, 7, 7)
    o = boxplot_summary([1, 2, 3, 4, 100])
    assert o.outliers == (100.0,) and o.whisker_hi == 4.0
    assert set(o.as_dict()) == {"median", "q1", "q3", "whisker_lo", "whisker_hi", "outliers"}
    with pytest.raises(ValueError):
        boxplot_summary([])
