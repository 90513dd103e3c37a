import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dualcv.data import Dataset
from dualcv.diagnostics import (
    ACTIVE_LABOR_FORMULA,
    PATTERNS,
    add_active_labor,
    anchoring_test,
    diagnostic_report,
    endowment_comparison,
    group_means_csv,
    one_way_anova,
    response_pattern_shares,
    welch_t,
)
from dualcv.simulate import generate, survey_profile
from oracles import make_dataset


def pattern_dataset(counts, values=None):
    y1, y2 = [], []
    for (a, b), c in zip(((1, 1), (1, 0), (0, 1), (0, 0)), counts):
        y1 += [a] * c
        y2 += [b] * c
    kw = {} if values is None else {"v": values}
    return make_dataset(y1, y2, **kw)


class TestAnova:
    def test_hand_computed(self):
        res = one_way_anova([[1, 2, 3], [4, 5, 6]])
        assert res.statistic == pytest.approx(13.5, abs=1e-12)
        assert res.p_value == pytest.approx(0.0213, abs=5e-5)
        assert res.df == (1.0, 4.0)

    def test_agrees_with_scipy(self):
        rng = np.random.default_rng(0)
        groups = [rng.normal(m, 1, n) for m, n in ((0, 5), (0.5, 8), (1, 6))]
        ref = stats.f_oneway(*groups)
        res = one_way_anova(groups)
        assert res.statistic == pytest.approx(ref.statistic, rel=1e-12)
        assert res.p_value == pytest.approx(ref.pvalue, rel=1e-10)

    def test_no_variation(self):
        res = one_way_anova([[2.0, 2.0], [2.0, 2.0, 2.0]])
        assert res.statistic == 0.0 and res.p_value == 1.0

    def test_between_only_variation(self):
        res = one_way_anova([[1.0, 1.0], [3.0, 3.0]])
        assert math.isinf(res.statistic) and res.p_value == 0.0

    def test_single_group_is_degenerate(self):
        with pytest.warns(RuntimeWarning):
            res = one_way_anova([[1.0, 2.0]])
        assert res.statistic is None and res.verdict == "not computed"


class TestWelch:
    def test_agrees_with_scipy(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(0, 1, 12), rng.normal(0.7, 2, 30)
        t, df, p = welch_t(a, b)
        ref = stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, rel=1e-12)
        assert p == pytest.approx(ref.pvalue, rel=1e-10)

    def test_identical_groups(self):
        assert welch_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])[2] == 1.0
        assert welch_t([4.0, 4.0], [4.0, 4.0, 4.0])[2] == 1.0

    def test_separated_groups_with_tiny_noise(self):
        eps = np.array([1e-3, -1e-3, 2e-3, -2e-3])
        assert welch_t(np.zeros(4) + eps, np.ones(4) + eps)[2] < 0.01

    def test_too_few(self):
        assert math.isnan(welch_t([1.0], [1.0, 2.0])[2])


class TestAnchoring:
    def test_groups_and_intervals(self):
        ds = make_dataset([1] * 6, [1] * 6, bid_cash=[25, 25, 25, 31, 31, 31], max_wtp=[30, 40, 50, 35, 45, 55])
        res = anchoring_test(ds, "cash")
        g25, g31 = res.groups
        assert (g25.level, g25.n, g25.mean) == (25.0, 3, 40.0)
        half = stats.t.ppf(0.975, 2) * 10 / math.sqrt(3)
        assert g25.ci_low == pytest.approx(40 - half) and g31.ci_high == pytest.approx(45 + half)
        assert res.omnibus.p_value == pytest.approx(stats.f_oneway([30, 40, 50], [35, 45, 55]).pvalue)

    def test_cross_vehicle_groups_labor_by_cash(self):
        ds = make_dataset([1] * 4, [1] * 4, bid_cash=[25, 25, 31, 31], bid_labor=[1, 2, 1, 2], max_wtc=[1.0, 2.0, 3.0, 4.0])
        res = anchoring_test(ds, "cross")
        assert res.response == "max_wtc" and res.grouped_by == "bid_cash"
        assert [g.mean for g in res.groups] == [1.5, 3.5]

    def test_small_group_dropped(self):
        ds = make_dataset([1] * 5, [1] * 5, bid_cash=[25, 25, 31, 31, 70], max_wtp=[1.0, 2.0, 3.0, 4.0, 9.0])
        with pytest.warns(UserWarning, match="dropped"):
            res = anchoring_test(ds, "cash")
        assert res.dropped == (70.0,) and len(res.groups) == 2

    def test_single_level_degenerate(self):
        ds = make_dataset([1] * 3, [1] * 3, bid_cash=[25, 25, 25], max_wtp=[1.0, 2.0, 3.0])
        with pytest.warns(RuntimeWarning):
            res = anchoring_test(ds, "cash")
        assert res.omnibus.statistic is None

    def test_unknown_vehicle(self):
        with pytest.raises(ValueError):
            anchoring_test(make_dataset([1], [1], max_wtp=[1.0]), "barter")

    def test_null_holds_on_synthetic_surveys(self):
        rejections = 0
        for rep in range(100):
            ds = generate(survey_profile(seed=99), rep)
            rejections += anchoring_test(ds, "cash").omnibus.p_value <= 0.05
        assert rejections <= 10

    def test_record_order_invariant(self):
        ds = generate(survey_profile(seed=3))
        rev = Dataset(tuple(reversed(ds.records)), dict(ds.variable_meta))
        a, b = anchoring_test(ds, "labor"), anchoring_test(rev, "labor")
        assert a.omnibus.statistic == pytest.approx(b.omnibus.statistic, rel=1e-12)


class TestEndowments:
    def test_six_pairs_against_scipy(self):
        rng = np.random.default_rng(2)
        ds = pattern_dataset((10, 8, 7, 5), rng.normal(size=30))
        comps = endowment_comparison(ds, "v")
        assert len(comps) == 6
        c = comps[0]
        assert (c.group_a, c.group_b) == ("Yes-Yes", "Yes-No")
        v = ds.column("v")
        ref = stats.ttest_ind(v[:10], v[10:18], equal_var=False)
        assert c.p == pytest.approx(ref.pvalue, rel=1e-10)
        assert 0 <= c.p <= 1

    def test_bonferroni(self):
        rng = np.random.default_rng(3)
        ds = pattern_dataset((10, 8, 7, 5), rng.normal(size=30))
        for c in endowment_comparison(ds, "v", bonferroni=True):
            assert c.p_adjusted == pytest.approx(min(1.0, 6 * c.p))

    def test_empty_group_warns(self):
        with pytest.warns(UserWarning):
            comps = endowment_comparison(pattern_dataset((3, 3, 3, 0), np.arange(9.0)), "v")
        assert math.isnan(comps[2].p)  # Yes-Yes vs No-No

    def test_active_labor(self):
        ds = make_dataset([1, 0], [1, 1], working_members=[4.0, 2.0], dependency_ratio=[0.5, 1.0])
        out = add_active_labor(ds)
        assert list(out.column("active_labor")) == [4 / 3, 2 / 3]
        assert out.variable_meta["active_labor"].description == ACTIVE_LABOR_FORMULA


class TestShares:
    def test_survey_shares(self):
        shares = response_pattern_shares(pattern_dataset((41, 22, 20, 17)))
        assert shares == {"Yes-Yes": 0.41, "Yes-No": 0.22, "No-Yes": 0.20, "No-No": 0.17}

    def test_single_record(self):
        shares = response_pattern_shares(pattern_dataset((0, 0, 1, 0)))
        assert shares["No-Yes"] == 1.0 and sum(shares.values()) == 1.0

    def test_symmetric_design_is_balanced(self):
        cfg = survey_profile(n=20000, rho=0.0, seed=4)
        cfg = cfg.replace(
            eq1_coefs={k: 0.0 for k in cfg.eq1_coefs},
            eq2_coefs={k: 0.0 for k in cfg.eq2_coefs},
            open_ended=False,
        )
        shares = response_pattern_shares(generate(cfg))
        for p in PATTERNS:
            assert shares[p] == pytest.approx(0.25, abs=3 * math.sqrt(0.25 * 0.75 / 20000))

    @settings(max_examples=100, deadline=None)
    @given(st.tuples(*[st.integers(0, 40)] * 4).filter(lambda c: sum(c) > 0))
    def test_sum_to_one(self, counts):
        assert sum(response_pattern_shares(pattern_dataset(counts)).values()) == pytest.approx(1.0, abs=1e-15)


class TestReport:
    def test_report_and_csv(self):
        ds = generate(survey_profile(seed=8))
        rep = diagnostic_report(ds)
        assert json.loads(json.dumps(rep))["n"] == ds.n
        assert set(rep["endowments"]) == {"per_capita_income", "active_labor"}
        assert rep["metadata"]["active_labor"] == ACTIVE_LABOR_FORMULA
        assert [a["vehicle"] for a in rep["anchoring"]] == ["cash", "labor", "cross"]
        rows = list(csv.DictReader(io.StringIO(group_means_csv(rep))))
        assert len(rows) == 7 + 5 + 7
        assert rows[0]["vehicle"] == "cash" and float(rows[0]["level"]) == 25.0
