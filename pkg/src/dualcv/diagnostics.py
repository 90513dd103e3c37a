"""Behavioral checks on the survey responses.

* Anchoring: do the open-ended maxima depend on the randomly assigned
  opening bid?  Group means per bid level with t intervals, and a one-way
  ANOVA across levels.
* Endowments: Welch t tests of a household variable between the four
  (cash, labor) response patterns.
* Response-pattern shares.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .data import Dataset, VariableMeta, with_covariates
from .inference import TestResult

__all__ = [
    "PATTERNS",
    "ACTIVE_LABOR_FORMULA",
    "GroupStat",
    "AnchoringResult",
    "GroupComparison",
    "one_way_anova",
    "welch_t",
    "anchoring_test",
    "endowment_comparison",
    "response_pattern_shares",
    "add_active_labor",
    "diagnostic_report",
    "group_means_csv",
]

PATTERNS = ("Yes-Yes", "Yes-No", "No-Yes", "No-No")
_PATTERN_CODES = {(1, 1): "Yes-Yes", (1, 0): "Yes-No", (0, 1): "No-Yes", (0, 0): "No-No"}
ACTIVE_LABOR_FORMULA = "working_members / (1 + dependency_ratio * working_members)"

_VEHICLES = {
    "cash": ("max_wtp", "bid_cash"),
    "labor": ("max_wtc", "bid_labor"),
    "cross": ("max_wtc", "bid_cash"),
}


# --------------------------------------------------------------------------
# Test statistics


def one_way_anova(groups: Sequence[Sequence[float]], name: str = "one-way ANOVA") -> TestResult:
    """F test of equal means across groups.

    With no variation at all the statistic is 0 and p is 1; with variation
    only between groups it is infinite and p is 0.
    """
    arrays = [np.asarray(g, dtype=float) for g in groups]
    k = len(arrays)
    n = sum(a.size for a in arrays)
    if k < 2 or n - k < 1:
        warnings.warn(f"{name}: need at least 2 groups and n > k, got k={k}, n={n}", RuntimeWarning, stacklevel=2)
        return TestResult(name, None, None, None)
    grand = sum(float(a.sum()) for a in arrays) / n
    ssb = sum(a.size * (float(a.mean()) - grand) ** 2 for a in arrays)
    ssw = sum(float(((a - a.mean()) ** 2).sum()) for a in arrays)
    df1, df2 = k - 1, n - k
    scale = max(1.0, abs(grand)) ** 2 * n
    if ssb <= 1e-28 * scale:
        ssb = 0.0
    if ssw <= 1e-28 * scale:
        if ssb == 0.0:
            return TestResult(name, 0.0, (float(df1), float(df2)), 1.0)
        return TestResult(name, math.inf, (float(df1), float(df2)), 0.0)
    F = (ssb / df1) / (ssw / df2)
    return TestResult(name, F, (float(df1), float(df2)), float(stats.f.sf(F, df1, df2)))


def welch_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float, float]:
    """Unequal-variance two-sample t: (statistic, df, two-sided p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        return math.nan, math.nan, math.nan
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)) / a.size, float(b.var(ddof=1)) / b.size
    se2 = va + vb
    if se2 == 0.0:
        if ma == mb:
            return 0.0, float(a.size + b.size - 2), 1.0
        return math.copysign(math.inf, ma - mb), float(a.size + b.size - 2), 0.0
    t = (ma - mb) / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = float(2.0 * stats.t.sf(abs(t), df))
    return t, df, min(1.0, p)


# --------------------------------------------------------------------------
# Anchoring


@dataclass(frozen=True)
class GroupStat:
    level: float
    n: int
    mean: float
    sd: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return {"level": self.level, "n": self.n, "mean": self.mean, "sd": self.sd, "ci_low": self.ci_low, "ci_high": self.ci_high}


@dataclass(frozen=True)
class AnchoringResult:
    vehicle: str
    response: str
    grouped_by: str
    groups: tuple[GroupStat, ...]
    omnibus: TestResult
    dropped: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "vehicle": self.vehicle,
            "response": self.response,
            "grouped_by": self.grouped_by,
            "groups": [g.to_dict() for g in self.groups],
            "omnibus": self.omnibus.to_dict(),
            "dropped_levels": list(self.dropped),
        }


def _group_stat(level: float, x: np.ndarray, level_ci: float) -> GroupStat:
    n = x.size
    m = float(x.mean())
    sd = float(x.std(ddof=1))
    half = float(stats.t.ppf(0.5 + level_ci / 2.0, n - 1)) * sd / math.sqrt(n)
    return GroupStat(float(level), n, m, sd, m - half, m + half)


def anchoring_test(ds: Dataset, vehicle: str = "cash", level: float = 0.95, alpha: float = 0.05) -> AnchoringResult:
    """Group open-ended maxima by starting bid and test for equal means.

    ``vehicle`` is ``"cash"`` (max WTP by cash bid), ``"labor"`` (max WTC by
    labor bid) or ``"cross"`` (max WTC by cash bid).  Bid levels with
    fewer than two answers are dropped with a warning.
    """
    if vehicle not in _VEHICLES:
        raise ValueError(f"vehicle must be one of {sorted(_VEHICLES)}, got {vehicle!r}")
    response, bid = _VEHICLES[vehicle]
    y = ds.column(response)
    g = ds.column(bid)
    ok = ~np.isnan(y) & ~np.isnan(g)
    if not ok.any():
        raise ValueError(f"no records with both {response!r} and {bid!r}")
    y, g = y[ok], g[ok]
    groups, dropped, arrays = [], [], []
    for lv in np.unique(g):
        x = y[g == lv]
        if x.size < 2:
            dropped.append(float(lv))
            continue
        groups.append(_group_stat(lv, x, level))
        arrays.append(x)
    if dropped:
        warnings.warn(f"{bid} level(s) {dropped} have fewer than 2 {response} answers and were dropped", UserWarning, stacklevel=2)
    name = f"ANOVA {response} by {bid}"
    if len(arrays) < 2:
        warnings.warn(f"{name}: fewer than 2 usable bid levels, no omnibus statistic", RuntimeWarning, stacklevel=2)
        omnibus = TestResult(name, None, None, None, alpha)
    else:
        res = one_way_anova(arrays, name)
        omnibus = TestResult(name, res.statistic, res.df, res.p_value, alpha)
    return AnchoringResult(vehicle, response, bid, tuple(groups), omnibus, tuple(dropped))


# --------------------------------------------------------------------------
# Endowment comparisons


@dataclass(frozen=True)
class GroupComparison:
    group_a: str
    group_b: str
    variable: str
    mean_a: float
    mean_b: float
    n_a: int
    n_b: int
    statistic: float
    df: float
    p: float
    p_adjusted: float | None = None

    def to_dict(self) -> dict:
        d = {
            "group_a": self.group_a,
            "group_b": self.group_b,
            "variable": self.variable,
            "mean_a": self.mean_a,
            "mean_b": self.mean_b,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "statistic": self.statistic,
            "df": self.df,
            "p": self.p,
        }
        if self.p_adjusted is not None:
            d["p_adjusted"] = self.p_adjusted
        return d


def _patterns(ds: Dataset) -> np.ndarray:
    y1, y2 = ds.column("y1"), ds.column("y2")
    return np.array([_PATTERN_CODES[(int(a), int(b))] for a, b in zip(y1, y2)], dtype=object)


def endowment_comparison(ds: Dataset, variable: str, bonferroni: bool = False) -> list[GroupComparison]:
    """Welch t tests of ``variable`` between every pair of response patterns."""
    x = ds.column(variable)
    pats = _patterns(ds)
    ok = ~np.isnan(x)
    by = {p: x[ok & (pats == p)] for p in PATTERNS}
    empty = [p for p in PATTERNS if by[p].size < 2]
    if empty:
        warnings.warn(f"response group(s) {empty} have fewer than 2 values of {variable!r}", UserWarning, stacklevel=2)
    pairs = list(itertools.combinations(PATTERNS, 2))
    out = []
    for a, b in pairs:
        t, df, p = welch_t(by[a], by[b])
        ma = float(by[a].mean()) if by[a].size else math.nan
        mb = float(by[b].mean()) if by[b].size else math.nan
        adj = min(1.0, p * len(pairs)) if bonferroni and not math.isnan(p) else None
        out.append(GroupComparison(a, b, variable, ma, mb, int(by[a].size), int(by[b].size), t, df, p, adj))
    return out


def response_pattern_shares(ds: Dataset) -> dict[str, float]:
    """Shares of the four (cash, labor) answer patterns; they sum to 1."""
    if ds.n == 0:
        raise ValueError("empty dataset")
    pats = _patterns(ds)
    counts = {p: int(np.sum(pats == p)) for p in PATTERNS}
    return {p: c / ds.n for p, c in counts.items()}


def add_active_labor(ds: Dataset, name: str = "active_labor") -> Dataset:
    """Active members per dependent household member, derived from the
    number of working members and the dependency ratio."""
    if name in ds.covariate_names:
        return ds
    w = ds.column("working_members")
    d = ds.column("dependency_ratio")
    out = with_covariates(ds, **{name: w / (1.0 + d * w)})
    meta = dict(out.variable_meta)
    meta[name] = VariableMeta("continuous", ACTIVE_LABOR_FORMULA)
    return Dataset(out.records, meta, out.bid_design)


# --------------------------------------------------------------------------
# Reports


def diagnostic_report(
    ds: Dataset,
    variables: Sequence[str] | None = None,
    vehicles: Sequence[str] = ("cash", "labor", "cross"),
    bonferroni: bool = False,
) -> dict:
    """Everything the diagnose command prints, as a JSON-ready dict.

    ``variables`` defaults to per-capita income and active labor when
    those can be formed.
    """
    metadata = {}
    if variables is None:
        variables = []
        if ds.has("per_capita_income"):
            variables.append("per_capita_income")
        if ds.has("active_labor"):
            variables.append("active_labor")
        elif ds.has("working_members") and ds.has("dependency_ratio"):
            ds = add_active_labor(ds)
            variables.append("active_labor")
    if "active_labor" in variables and not ds.has("active_labor"):
        ds = add_active_labor(ds)
    if "active_labor" in variables:
        metadata["active_labor"] = ds.variable_meta["active_labor"].description or "supplied"
    anchoring = []
    for v in vehicles:
        response, bid = _VEHICLES[v]
        if np.all(np.isnan(ds.column(response))):
            continue
        anchoring.append(anchoring_test(ds, v).to_dict())
    return {
        "n": ds.n,
        "response_pattern_shares": response_pattern_shares(ds),
        "anchoring": anchoring,
        "endowments": {v: [c.to_dict() for c in endowment_comparison(ds, v, bonferroni)] for v in variables},
        "bonferroni": bonferroni,
        "metadata": metadata,
    }


def group_means_csv(report: dict) -> str:
    """Anchoring group means and intervals as CSV text, for plotting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["vehicle", "response", "grouped_by", "level", "n", "mean", "sd", "ci_low", "ci_high"])
    for a in report["anchoring"]:
        for g in a["groups"]:
            w.writerow([a["vehicle"], a["response"], a["grouped_by"], repr(g["level"]), g["n"], repr(g["mean"]), repr(g["sd"]), repr(g["ci_low"]), repr(g["ci_high"])])
    return buf.getvalue()
