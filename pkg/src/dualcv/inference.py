"""Hypothesis-test result container and the chi-square LR helper."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy import stats


@dataclass(frozen=True)
class TestResult:
    """Outcome of a hypothesis test at level ``alpha``.

    ``df`` is a float for chi-square/t tests and a (numerator, denominator)
    pair for F tests.  ``statistic`` is None for degenerate tests that
    could not be computed.
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float | None
    df: float | tuple[float, float] | None
    p_value: float | None
    alpha: float = 0.05

    @property
    def reject(self) -> bool:
        return self.p_value is not None and self.p_value < self.alpha

    @property
    def verdict(self) -> str:
        if self.p_value is None:
            return "not computed"
        return "reject H0" if self.reject else "fail to reject H0"

    def to_dict(self) -> dict:
        df = list(self.df) if isinstance(self.df, tuple) else self.df
        return {
            "name": self.name,
            "statistic": self.statistic,
            "df": df,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "verdict": self.verdict,
        }


def lr_test(loglik_unrestricted: float, loglik_restricted: float, df: int, name: str = "LR", alpha: float = 0.05, slack: float = 1e-6) -> TestResult:
    """Likelihood-ratio test; small negative statistics from optimizer noise clamp to 0."""
    stat = 2.0 * (loglik_unrestricted - loglik_restricted)
    if stat < 0:
        if stat < -slack:
            warnings.warn(
                f"negative LR statistic {stat:.3g}: the unrestricted fit is worse than the restricted one; "
                "check convergence",
                RuntimeWarning,
                stacklevel=2,
            )
        stat = 0.0
    p = 1.0 if stat == 0 else float(stats.chi2.sf(stat, df))
    return TestResult(name, stat, float(df), p, alpha)


def two_sided_p(z: float) -> float:
    if not math.isfinite(z):
        return 0.0 if math.isinf(z) else math.nan
    return float(2.0 * stats.norm.sf(abs(z)))
