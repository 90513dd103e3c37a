"""Compensating surplus in money and labor, and shadow-wage aggregation.

With a linear utility index the compensating surplus for an equation is
the bid at which the respondent is indifferent: ``-v_nobid / b_bid``,
where ``v_nobid`` is the index without the bid term (status quo utility is
normalized to zero).  Labor surplus is in days per month; its annual money
value is ``12 * days * w`` with ``w`` the midpoint of the shadow-wage
interval ``[ratio * w_slack, ratio * w_peak]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .biprobit import BiprobitFit
from .data import Dataset, SurveyRecord
from .effects import equation_parts
from .errors import DomainError, SpecError, WelfareSignError
from .probit import CONST, FitResult, design_matrix

__all__ = [
    "DEFAULT_SHADOW_RATIO",
    "ShadowWage",
    "TotalValue",
    "WelfareReport",
    "cv_money",
    "cv_labor",
    "shadow_wage",
    "cv_total",
    "welfare_report",
    "render_table5",
]

DEFAULT_SHADOW_RATIO = 0.3863
CASH_BID = "bid_cash"
LABOR_BID = "bid_labor"


@dataclass(frozen=True)
class ShadowWage:
    ratio: float
    lower: float
    upper: float

    def __post_init__(self):
        if not 0.0 < self.ratio <= 1.0:
            raise DomainError(f"shadow-wage ratio must lie in (0, 1], got {self.ratio!r}")
        if self.lower > self.upper:
            raise DomainError(f"shadow-wage lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def mean_w(self) -> float:
        return 0.5 * (self.lower + self.upper)


def shadow_wage(wage_slack: float, wage_peak: float, ratio: float = DEFAULT_SHADOW_RATIO) -> ShadowWage:
    """Shadow-wage interval from slack- and peak-season market wages."""
    if not 0.0 < ratio <= 1.0:
        raise DomainError(f"shadow-wage ratio must lie in (0, 1], got {ratio!r}")
    if not (wage_slack > 0 and wage_peak > 0):
        raise DomainError("wages must be positive")
    return ShadowWage(ratio, ratio * wage_slack, ratio * wage_peak)


def _coefs(fit, equation: int) -> Mapping[str, float]:
    if isinstance(fit, Mapping):
        return fit
    if isinstance(fit, BiprobitFit):
        return fit.eq1_coefs if equation == 1 else fit.eq2_coefs
    if isinstance(fit, FitResult):
        equation_parts(fit, equation)
        return fit.coefficients
    raise TypeError(f"cannot take coefficients from {type(fit).__name__}")


def _surplus(coefs: Mapping[str, float], record: SurveyRecord, bid: str) -> float:
    if bid not in coefs:
        raise SpecError(f"equation has no {bid!r} coefficient")
    slope = coefs[bid]
    if not slope < 0:
        raise WelfareSignError(f"{bid} coefficient must be negative for a finite surplus, got {slope!r}")
    v = coefs.get(CONST, 0.0)
    for name, b in coefs.items():
        if name in (CONST, bid):
            continue
        x = record.value(name)
        if x is None:
            raise DomainError(f"record {record.id!r} has no value for {name!r}")
        v += b * x
    return -v / slope


def cv_money(fit, record: SurveyRecord) -> float:
    """Money surplus, ETB per year, from the cash equation."""
    return _surplus(_coefs(fit, 1), record, CASH_BID)


def cv_labor(fit, record: SurveyRecord) -> float:
    """Labor surplus, days per month, from the labor equation.

    The cash response enters at the respondent's observed value.
    """
    return _surplus(_coefs(fit, 2), record, LABOR_BID)


@dataclass(frozen=True)
class TotalValue:
    total: float
    labor_days_annual: float
    labor_value: float
    labor_value_slack: float
    labor_value_peak: float


def cv_total(cv_m: float, cv_l_monthly: float, sw: ShadowWage) -> TotalValue:
    """Total annual surplus ``cv_m + 12 * cv_l * mean_w`` with slack/peak variants."""
    days = 12.0 * cv_l_monthly
    labor = days * sw.mean_w
    return TotalValue(
        total=cv_m + labor,
        labor_days_annual=days,
        labor_value=labor,
        labor_value_slack=days * sw.lower,
        labor_value_peak=days * sw.upper,
    )


# --------------------------------------------------------------------------
# Report

ROWS = (
    ("wtp", "WTP (ETB/Year)"),
    ("wtc_days", "WTC (Days/year)"),
    ("wtc_slack", "Slack agricultural season WTC (ETB/Year)"),
    ("wtc_peak", "Peak agricultural season WTC (ETB/Year)"),
    ("wtc_value", "Average WTC (ETB/Year)"),
    ("total", "Total average annual willingness to contribute (ETB/Year)"),
)


@dataclass
class WelfareReport:
    per_respondent: list[dict]
    summary: dict[str, dict[str, float]]
    cash_share: float
    wage_mode: str
    shadow_ratio: float
    truncate_negative: bool
    n: int
    shadow: ShadowWage | None = None
    simulation: dict | None = field(default=None)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "wage_mode": self.wage_mode,
            "shadow_ratio": self.shadow_ratio,
            "truncate_negative": self.truncate_negative,
            "summary": self.summary,
            "cash_share": self.cash_share,
            "per_respondent": self.per_respondent,
        }
        if self.shadow is not None:
            d["shadow_wage"] = {"lower": self.shadow.lower, "upper": self.shadow.upper, "mean_w": self.shadow.mean_w}
        if self.simulation is not None:
            d["simulation"] = self.simulation
        return d


def _index_parts(fit, ds: Dataset, equation: int, bid: str):
    spec, beta, V = equation_parts(fit, equation)
    if bid not in spec.regressors:
        raise SpecError(f"equation {equation} has no {bid!r} regressor")
    _, X = design_matrix(spec, ds)
    j = spec.param_names.index(bid)
    keep = [i for i in range(X.shape[1]) if i != j]
    return X[:, keep], beta, V, j, keep


def _summ(x: np.ndarray) -> dict[str, float]:
    # identical values give an exact zero rather than rounding noise
    sd = float(np.std(x, ddof=1)) if x.size > 1 and np.ptp(x) > 0 else 0.0
    return {"mean": float(np.mean(x)), "sd": sd}


def welfare_report(
    fit: BiprobitFit | tuple[FitResult, FitResult],
    ds: Dataset,
    sw: ShadowWage | None = None,
    shadow_ratio: float = DEFAULT_SHADOW_RATIO,
    wage_mode: str = "respondent",
    truncate_negative: bool = False,
    sim_draws: int = 0,
    seed: int = 0,
) -> WelfareReport:
    """Per-respondent money, labor and total surplus with summary rows.

    ``wage_mode="respondent"`` values each respondent's labor at their own
    shadow wage; ``"global"`` uses ``sw`` (or, when omitted, the shadow
    wage of the sample-mean wages) for everyone.  Negative surpluses are
    kept unless ``truncate_negative``.  With ``sim_draws > 0`` the summary
    means get percentile intervals from parameter draws off the fit's
    asymptotic normal distribution.
    """
    if wage_mode not in ("respondent", "global"):
        raise ValueError(f"wage_mode must be 'respondent' or 'global', got {wage_mode!r}")
    fits = fit if isinstance(fit, tuple) else (fit, fit)
    spec1, _, _ = equation_parts(fits[0], 1)
    spec2, _, _ = equation_parts(fits[1], 2)
    needed = list(spec1.variables) + list(spec2.variables)
    if wage_mode == "respondent":
        needed += ["wage_slack", "wage_peak"]
    elif sw is None:
        needed += ["wage_slack", "wage_peak"]
    sample = ds.complete_cases(needed)
    if sample.n == 0:
        raise ValueError("no complete respondents for the welfare computation")

    X1, b1, V1, j1, k1 = _index_parts(fits[0], sample, 1, CASH_BID)
    X2, b2, V2, j2, k2 = _index_parts(fits[1], sample, 2, LABOR_BID)
    if not b1[j1] < 0:
        raise WelfareSignError(f"cash bid coefficient must be negative, got {b1[j1]!r}")
    if not b2[j2] < 0:
        raise WelfareSignError(f"labor bid coefficient must be negative, got {b2[j2]!r}")

    if wage_mode == "respondent":
        ws, wp = sample.column("wage_slack"), sample.column("wage_peak")
        if np.any(ws <= 0) or np.any(wp <= 0):
            raise DomainError("wages must be positive")
        if not 0.0 < shadow_ratio <= 1.0:
            raise DomainError(f"shadow-wage ratio must lie in (0, 1], got {shadow_ratio!r}")
        lower, upper = shadow_ratio * ws, shadow_ratio * wp
        shadow = None
    else:
        if sw is None:
            sw = shadow_wage(float(np.mean(sample.column("wage_slack"))), float(np.mean(sample.column("wage_peak"))), shadow_ratio)
        lower = np.full(sample.n, sw.lower)
        upper = np.full(sample.n, sw.upper)
        shadow_ratio = sw.ratio
        shadow = sw
    mean_w = 0.5 * (lower + upper)

    def compute(beta1, beta2):
        cm = -(X1 @ beta1[..., k1].T) / beta1[..., j1]
        cl = -(X2 @ beta2[..., k2].T) / beta2[..., j2]
        if truncate_negative:
            cm = np.maximum(cm, 0.0)
            cl = np.maximum(cl, 0.0)
        return cm, cl

    cm, cl = compute(b1, b2)
    days = 12.0 * cl
    value = days * mean_w
    total = cm + value
    per = [
        {
            "id": rid,
            "cv_money": float(cm[i]),
            "cv_labor": float(cl[i]),
            "cv_labor_annual_days": float(days[i]),
            "labor_value": float(value[i]),
            "labor_value_slack": float(days[i] * lower[i]),
            "labor_value_peak": float(days[i] * upper[i]),
            "mean_w": float(mean_w[i]),
            "cv_total": float(total[i]),
        }
        for i, rid in enumerate(sample.ids)
    ]
    cols = {
        "wtp": cm,
        "wtc_days": days,
        "wtc_slack": days * lower,
        "wtc_peak": days * upper,
        "wtc_value": value,
        "total": total,
    }
    summary = {key: _summ(cols[key]) for key, _ in ROWS}
    share = float(np.mean(cm) / np.mean(total))

    sim = None
    if sim_draws > 0:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
        if isinstance(fit, BiprobitFit):
            draws = rng.multivariate_normal(fit.params, fit.vcov, size=sim_draws, method="eigh")
            n1 = len(spec1.param_names)
            D1, D2 = draws[:, :n1], draws[:, n1 : n1 + len(spec2.param_names)]
        else:
            D1 = rng.multivariate_normal(b1, V1, size=sim_draws, method="eigh")
            D2 = rng.multivariate_normal(b2, V2, size=sim_draws, method="eigh")
        scm, scl = compute(D1, D2)
        sdays = 12.0 * scl
        stot = scm + sdays * mean_w[:, None]
        means = {
            "wtp": scm.mean(axis=0),
            "wtc_days": sdays.mean(axis=0),
            "wtc_value": (sdays * mean_w[:, None]).mean(axis=0),
            "total": stot.mean(axis=0),
            "cash_share": scm.mean(axis=0) / stot.mean(axis=0),
        }
        sim = {
            "draws": int(sim_draws),
            "seed": int(seed),
            "ci95": {k: [float(np.percentile(v, 2.5)), float(np.percentile(v, 97.5))] for k, v in means.items()},
        }

    return WelfareReport(
        per_respondent=per,
        summary=summary,
        cash_share=share,
        wage_mode=wage_mode,
        shadow_ratio=float(shadow_ratio),
        truncate_negative=truncate_negative,
        n=sample.n,
        shadow=shadow,
        simulation=sim,
    )


def render_table5(report: WelfareReport) -> str:
    w = max(len(label) for _, label in ROWS)
    lines = [f"{'Valuation Measure':<{w}}  {'Mean':>10}  {'Std. dev.':>10}"]
    for key, label in ROWS:
        s = report.summary[key]
        lines.append(f"{label:<{w}}  {s['mean']:>10.2f}  {s['sd']:>10.2f}")
    lines.append(f"{'Cash share of total':<{w}}  {100 * report.cash_share:>9.2f}%")
    if report.simulation is not None:
        for key, (lo, hi) in report.simulation["ci95"].items():
            lines.append(f"{'95% CI ' + key:<{w}}  [{lo:.2f}, {hi:.2f}]")
    lines.append(f"N = {report.n}; wage mode = {report.wage_mode}; shadow ratio = {report.shadow_ratio:g}")
    return "\n".join(lines)
