"""Independent reference computations and frozen fixtures shared by the tests.

Nothing here calls the package's numerical routines; the oracles use scipy
quadrature, brute-force grids and plain loops.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from dualcv.data import SURVEY_CASH_BIDS, SURVEY_LABOR_BIDS, Dataset, SurveyRecord, VariableMeta


# --------------------------------------------------------------------------
# Bivariate normal CDF by 1-d adaptive quadrature


def bvn_cdf_quad(h: float, k: float, rho: float) -> float:
    """P[Z1 <= h, Z2 <= k] as the integral of phi(x) * Phi((k - rho x)/s) over x <= h."""
    s = math.sqrt((1.0 - rho) * (1.0 + rho))

    def f(x):
        return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * special.ndtr((k - rho * x) / s)

    lo, hi = -12.0, min(h, 12.0)
    if hi <= lo:
        return 0.0
    pts = [k / rho] if rho != 0 and lo < k / rho < hi else None
    val, _ = integrate.quad(f, lo, hi, points=pts, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


def bvn_cdf_dblquad(h: float, k: float, rho: float) -> float:
    """Second route: 2-d quadrature of the density itself."""
    s2 = (1.0 - rho) * (1.0 + rho)
    c = 1.0 / (2 * math.pi * math.sqrt(s2))

    def pdf(y, x):
        return c * math.exp(-(x * x + y * y - 2 * rho * x * y) / (2 * s2))

    val, _ = integrate.dblquad(pdf, -10.0, h, -10.0, k, epsabs=1e-12, epsrel=1e-12)
    return val


# --------------------------------------------------------------------------
# Probit log-likelihood and grid search


def probit_loglik_plain(y, X, beta) -> float:
    v = X @ np.asarray(beta, dtype=float)
    q = 2 * np.asarray(y) - 1
    return float(np.sum(special.log_ndtr(q * v)))


def grid_search_max(f, lo, hi, points=81, zooms=8):
    """Maximize ``f`` over a box by repeated grid refinement."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    best = None
    for _ in range(zooms):
        axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        cand = np.stack([m.ravel() for m in mesh], axis=1)
        vals = np.array([f(c) for c in cand])
        best = cand[int(np.argmax(vals))]
        step = (hi - lo) / (points - 1)
        lo, hi = best - 2 * step, best + 2 * step
    return best


# 8 records, one regressor; no separation
PROBIT8_Y = np.array([0, 0, 1, 0, 1, 1, 0, 1])
PROBIT8_X = np.array([-1.2, -0.4, -0.7, 0.3, 0.1, 1.5, 0.9, 2.0])


def probit8_oracle():
    X = np.column_stack([np.ones(8), PROBIT8_X])
    return grid_search_max(lambda b: probit_loglik_plain(PROBIT8_Y, X, b), [-3, -3], [3, 3])


# --------------------------------------------------------------------------
# Dataset builders


def make_dataset(y1, y2, bid_cash=None, bid_labor=None, kinds=None, **columns) -> Dataset:
    """Dataset from column arrays; ``columns`` may hold optional fields and covariates."""
    n = len(y1)
    bid_cash = np.full(n, 25.0) if bid_cash is None else bid_cash
    bid_labor = np.full(n, 1.0) if bid_labor is None else bid_labor
    optional = {k: columns.pop(k) for k in ("max_wtp", "max_wtc", "wage_slack", "wage_peak") if k in columns}
    recs = []
    for i in range(n):
        opt = {k: (None if v[i] is None or (isinstance(v[i], float) and math.isnan(v[i])) else float(v[i])) for k, v in optional.items()}
        recs.append(
            SurveyRecord(
                id=str(i + 1),
                bid_cash=float(bid_cash[i]),
                bid_labor=float(bid_labor[i]),
                y1=int(y1[i]),
                y2=int(y2[i]),
                covariates={k: float(v[i]) for k, v in columns.items()},
                **opt,
            )
        )
    meta = {k: VariableMeta(v) for k, v in (kinds or {}).items()}
    return Dataset(tuple(recs), meta)


# Cash-bid counts over the seven design levels whose mean and sample sd
# round to 44.44 and 14.46 (found by exhaustive search over near-uniform
# allocations of 194 respondents).
BID_COUNTS_194 = (29, 27, 29, 27, 27, 29, 26)


def cash_bid_fixture() -> np.ndarray:
    return np.repeat(np.array(SURVEY_CASH_BIDS), BID_COUNTS_194)


def consistency_fixture_210() -> tuple[Dataset, set[str]]:
    """210 respondents; 16 violate a consistency rule (10 cash, 5 labor, 1 both).

    Every other record is consistent, including ties (max == bid) and
    missing open-ended answers.
    """
    rng = np.random.default_rng(2024)
    recs = []
    bad = set()
    for i in range(210):
        bc = float(SURVEY_CASH_BIDS[i % 7])
        bl = float(SURVEY_LABOR_BIDS[i % 5])
        y1, y2 = int(rng.integers(0, 2)), int(rng.integers(0, 2))
        wtp = bc + float(rng.integers(0, 40)) if y1 else float(rng.integers(0, 60))
        wtc = bl + float(rng.integers(0, 3)) if y2 else float(rng.integers(0, 3))
        if i % 17 == 0:
            wtp = bc if y1 else wtp  # tie is consistent
        if i % 23 == 0:
            wtc = None
        if i < 10:
            y1, wtp = 1, bc - 5.0
        elif i < 15:
            y2, wtc = 1, bl - 0.5
        elif i == 15:
            y1, y2, wtp, wtc = 1, 1, bc - 1.0, 0.0
        if i < 16:
            bad.add(f"r{i:03d}")
        recs.append(SurveyRecord(f"r{i:03d}", bc, bl, y1, y2, max_wtp=wtp, max_wtc=wtc))
    return Dataset(tuple(recs)), bad


def counterfactual_ame(beta, X, j) -> float:
    """Average of Phi(v | x_j = 1) - Phi(v | x_j = 0), one respondent at a time."""
    total = 0.0
    for row in X:
        r1 = row.copy()
        r0 = row.copy()
        r1[j] = 1.0
        r0[j] = 0.0
        total += special.ndtr(r1 @ beta) - special.ndtr(r0 @ beta)
    return total / X.shape[0]


# Reference welfare figures used as arithmetic fixtures
WAGE_SLACK, WAGE_PEAK, SHADOW_RATIO = 13.55, 17.71, 0.3863
SHADOW_LOWER, SHADOW_UPPER = 5.23, 6.84
ANNUAL_DAYS = 28.77
WTC_SLACK, WTC_PEAK, WTC_AVERAGE = 150.46, 196.76, 177.82
WTP_MEAN, TOTAL = 57.37, 235.19
CASH_SHARE = 0.2439
