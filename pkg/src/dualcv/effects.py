"""Average marginal effects on a probit index, with delta-method errors.

Continuous regressors get the sample average derivative
``mean(phi(v_i)) * b_k``; dummies (including the endogenous cash response
in the labor equation) get the average discrete change
``mean(Phi(v_i | d=1) - Phi(v_i | d=0))``.  For the recursive model the
labor equation's structural index is used with y1 as a conditioning
regressor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .biprobit import BiprobitFit
from .bvn import norm_cdf, norm_pdf, norm_quantile
from .data import Dataset
from .errors import SpecError
from .probit import FitResult, ModelSpec, design_matrix

__all__ = ["AmeRow", "equation_parts", "ame", "ame_report"]


@dataclass(frozen=True)
class AmeRow:
    variable: str
    ame: float
    se: float
    ci_low: float
    ci_high: float
    kind: str
    eval_base: float

    @property
    def z(self) -> float:
        return self.ame / self.se if self.se > 0 else math.nan

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "ame": self.ame,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "kind": self.kind,
            "eval_base": self.eval_base,
        }


def equation_parts(fit: BiprobitFit | FitResult, equation: int) -> tuple[ModelSpec, np.ndarray, np.ndarray]:
    """Spec, coefficient vector and covariance block for one equation."""
    if equation not in (1, 2):
        raise SpecError(f"equation must be 1 or 2, got {equation!r}")
    if isinstance(fit, BiprobitFit):
        return fit.equation(equation)
    expected = "y1" if equation == 1 else "y2"
    if fit.spec.outcome != expected:
        raise SpecError(f"fit is for {fit.spec.outcome!r}, not equation {equation} ({expected!r})")
    return fit.spec, fit.params, fit.vcov


def ame(
    fit: BiprobitFit | FitResult,
    ds: Dataset,
    equation: int = 2,
    variables: Sequence[str] | None = None,
    level: float = 0.95,
) -> list[AmeRow]:
    """Average marginal effects of every regressor (or of ``variables``)."""
    spec, beta, V = equation_parts(fit, equation)
    names = list(spec.regressors) if variables is None else list(variables)
    unknown = [v for v in names if v not in spec.regressors]
    if unknown:
        raise SpecError(f"not regressors of equation {equation}: {unknown}")
    sample = ds.complete_cases(spec.variables)
    _, X = design_matrix(spec, sample)
    n = X.shape[0]
    v = X @ beta
    zcrit = norm_quantile(0.5 + level / 2.0)

    rows = []
    for name in names:
        j = spec.param_names.index(name)
        kind = sample.kind(name)
        if kind == "dummy":
            X1 = X.copy()
            X1[:, j] = 1.0
            X0 = X.copy()
            X0[:, j] = 0.0
            v1 = X1 @ beta
            v0 = X0 @ beta
            val = float(np.mean(norm_cdf(v1) - norm_cdf(v0)))
            grad = (norm_pdf(v1) @ X1 - norm_pdf(v0) @ X0) / n
            base = 0.0
        else:
            pdf = norm_pdf(v)
            val = float(np.mean(pdf) * beta[j])
            grad = -beta[j] * ((pdf * v) @ X) / n
            grad[j] += float(np.mean(pdf))
            base = float(np.mean(X[:, j]))
        se = math.sqrt(max(0.0, float(grad @ V @ grad)))
        rows.append(AmeRow(name, val, se, val - zcrit * se, val + zcrit * se, kind, base))
    return rows


def ame_report(rows: Sequence[AmeRow], labels: dict[str, str] | None = None) -> str:
    """Aligned text table: AME, std. err., CI and evaluation mean per variable."""
    if not rows:
        raise ValueError("no AME rows to report")
    labels = labels or {}

    def label(r):
        text = labels.get(r.variable, r.variable)
        return text + ("*" if r.kind == "dummy" else "")

    w = max(len("Variable"), *(len(label(r)) for r in rows))
    lines = [f"{'Variable':<{w}}  {'AME':>6}  {'Std. Err.':>9}  {'95% C.I.':>15}  {'Mean for AME':>12}"]
    for r in rows:
        ci = f"[{r.ci_low:.2f}, {r.ci_high:.2f}]"
        lines.append(f"{label(r):<{w}}  {r.ame:>6.2f}  {r.se:>9.2f}  {ci:>15}  {r.eval_base:>12.2f}")
    if any(r.kind == "dummy" for r in rows):
        lines.append("(*) AME is for discrete change of dummy variable from 0 to 1")
    return "\n".join(lines)
