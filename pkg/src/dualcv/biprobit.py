"""Recursive bivariate probit.

Two probit equations with jointly normal errors (correlation rho), where
the first outcome y1 also enters the second equation as a regressor:

    y1 = 1[x1'b1 + e1 > 0]
    y2 = 1[x2'b2 + eta*y1 + e2 > 0]

The likelihood contribution of a respondent is the probability of the
observed (y1, y2) cell.  With q_j = 2*y_j - 1 it is
Phi2(q1*v1, q2*v2, q1*q2*rho), so a single bivariate CDF covers all four
cells.  The correlation is optimized as athrho = atanh(rho).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import stats

from .bvn import LOG_FLOOR, bvn_cdf, norm_cdf, norm_pdf
from .data import Dataset
from .errors import ConvergenceError, SpecError
from .inference import TestResult, lr_test
from .optim import bfgs_maximize, covariance_from_hessian, numerical_hessian
from .probit import (
    CONST,
    FitResult,
    ModelSpec,
    ProbitOptions,
    check_binary,
    check_rank,
    design_matrix,
    fit_probit,
    separation_guard,
)

__all__ = [
    "BiprobitSpec",
    "BiprobitFit",
    "BiprobitOptions",
    "ExogeneityReport",
    "biprobit_loglik",
    "fit_biprobit",
    "lr_test_rho",
    "exogeneity_diagnostic",
    "render_table3",
]

# rho = tanh(15) = 1 - 1.9e-13; beyond this the likelihood is flat
ATHRHO_CAP = 15.0
BOUNDARY_RHO = 0.999


@dataclass(frozen=True)
class BiprobitSpec:
    eq1: ModelSpec
    eq2: ModelSpec

    def __post_init__(self):
        if self.eq2.endogenous_regressor is None:
            object.__setattr__(
                self,
                "eq2",
                ModelSpec(self.eq2.outcome, self.eq2.regressors, self.eq1.outcome if self.eq1.outcome in self.eq2.regressors else None),
            )
        if self.eq2.endogenous_regressor != self.eq1.outcome:
            raise SpecError(
                f"equation 2 must include {self.eq1.outcome!r} as its endogenous regressor "
                f"(got {self.eq2.endogenous_regressor!r})"
            )
        if self.eq1.outcome == self.eq2.outcome:
            raise SpecError("the two equations must have different outcomes")

    @property
    def excluded(self) -> tuple[str, ...]:
        """Regressors in equation 1 that are absent from equation 2."""
        return tuple(r for r in self.eq1.regressors if r not in self.eq2.regressors)

    @property
    def param_names(self) -> list[str]:
        return [f"eq1:{p}" for p in self.eq1.param_names] + [f"eq2:{p}" for p in self.eq2.param_names] + ["athrho"]

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.eq1.variables + self.eq2.variables))

    def to_dict(self) -> dict:
        return {"eq1": self.eq1.to_dict(), "eq2": self.eq2.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BiprobitSpec":
        for key in ("eq1", "eq2"):
            if key not in d:
                raise SpecError(f"spec missing {key!r}")
        return cls(ModelSpec.from_dict(d["eq1"]), ModelSpec.from_dict(d["eq2"]))


class _Arrays:
    """Design matrices for one estimation sample."""

    def __init__(self, spec: BiprobitSpec, ds: Dataset):
        self.y1, self.X1 = design_matrix(spec.eq1, ds)
        self.y2, self.X2 = design_matrix(spec.eq2, ds)
        self.k1 = self.X1.shape[1]
        self.q1 = 2.0 * self.y1 - 1.0
        self.q2 = 2.0 * self.y2 - 1.0
        self.sgn = self.q1 * self.q2
        self.pos = self.sgn > 0

    def split(self, theta):
        return theta[: self.k1], theta[self.k1 : -1], float(theta[-1])

    def fg(self, theta, gradient=True):
        b1, b2, ath = self.split(theta)
        capped = abs(ath) > ATHRHO_CAP
        rho = math.tanh(max(-ATHRHO_CAP, min(ATHRHO_CAP, ath)))
        w1 = self.q1 * (self.X1 @ b1)
        w2 = self.q2 * (self.X2 @ b2)
        P = np.empty_like(w1)
        pos = self.pos
        if pos.any():
            P[pos] = bvn_cdf(w1[pos], w2[pos], rho)
        if (~pos).any():
            P[~pos] = bvn_cdf(w1[~pos], w2[~pos], -rho)
        P = np.maximum(P, LOG_FLOOR)
        ll = float(np.sum(np.log(P)))
        if not gradient:
            return ll
        one_m = (1.0 - rho) * (1.0 + rho)
        s = math.sqrt(one_m)
        rs = self.sgn * rho
        g1 = norm_pdf(w1) * norm_cdf((w2 - rs * w1) / s)
        g2 = norm_pdf(w2) * norm_cdf((w1 - rs * w2) / s)
        dens = np.exp(-(w1 * w1 + w2 * w2 - 2.0 * rs * w1 * w2) / (2.0 * one_m)) / (2.0 * math.pi * s)
        grad = np.concatenate(
            [
                self.X1.T @ (self.q1 * g1 / P),
                self.X2.T @ (self.q2 * g2 / P),
                [0.0 if capped else float(np.sum(self.sgn * dens / P)) * one_m],
            ]
        )
        return ll, grad


def _as_theta(spec: BiprobitSpec, params) -> np.ndarray:
    names = spec.param_names
    if isinstance(params, Mapping):
        missing = [p for p in names if p not in params]
        if missing:
            raise SpecError(f"parameters missing for {missing}")
        return np.array([float(params[p]) for p in names])
    theta = np.asarray(params, dtype=float).ravel()
    if theta.size != len(names):
        raise SpecError(f"expected {len(names)} parameters (eq1, eq2, athrho), got {theta.size}")
    return theta


def biprobit_loglik(spec: BiprobitSpec, ds: Dataset, params) -> tuple[float, np.ndarray]:
    """Joint log-likelihood and analytic gradient.

    ``params`` is ordered (equation-1 coefficients, equation-2 coefficients,
    athrho) or a mapping keyed by :attr:`BiprobitSpec.param_names`.
    """
    theta = _as_theta(spec, params)
    arr = _Arrays(spec, ds.complete_cases(spec.variables))
    return arr.fg(theta)


@dataclass
class BiprobitFit:
    spec: BiprobitSpec
    eq1_coefs: dict[str, float]
    eq2_coefs: dict[str, float]
    athrho: float
    vcov: np.ndarray
    loglik: float
    n: int
    converged: bool
    iterations: int
    gradient_norm: float
    message: str = ""
    model: str = field(default="biprobit")

    @property
    def rho(self) -> float:
        return math.tanh(self.athrho)

    @property
    def boundary_warning(self) -> bool:
        return abs(self.rho) > BOUNDARY_RHO

    @property
    def param_names(self) -> list[str]:
        return self.spec.param_names

    @property
    def params(self) -> np.ndarray:
        return np.array(
            [self.eq1_coefs[p] for p in self.spec.eq1.param_names]
            + [self.eq2_coefs[p] for p in self.spec.eq2.param_names]
            + [self.athrho]
        )

    @property
    def se(self) -> dict[str, float]:
        d = np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))
        return dict(zip(self.param_names, map(float, d)))

    @property
    def athrho_se(self) -> float:
        return self.se["athrho"]

    @property
    def rho_se(self) -> float | None:
        """Delta-method standard error of rho; undefined at the boundary."""
        if self.boundary_warning:
            return None
        return (1.0 - self.rho**2) * self.athrho_se

    def equation(self, k: int) -> tuple[ModelSpec, np.ndarray, np.ndarray]:
        """(spec, coefficients, covariance block) of equation ``k`` (1 or 2)."""
        k1 = len(self.spec.eq1.param_names)
        if k == 1:
            sl = slice(0, k1)
            return self.spec.eq1, self.params[sl], self.vcov[sl, sl]
        if k == 2:
            sl = slice(k1, len(self.param_names) - 1)
            return self.spec.eq2, self.params[sl], self.vcov[sl, sl]
        raise SpecError(f"equation must be 1 or 2, got {k!r}")

    def wald_chi2(self) -> tuple[float, int]:
        """Joint Wald statistic for all slope coefficients of both equations."""
        idx = [i for i, p in enumerate(self.param_names) if p != "athrho" and not p.endswith(f":{CONST}")]
        b = self.params[idx]
        V = self.vcov[np.ix_(idx, idx)]
        try:
            stat = float(b @ np.linalg.solve(V, b))
        except np.linalg.LinAlgError:
            stat = float(b @ np.linalg.pinv(V) @ b)
        return stat, len(idx)

    def to_dict(self) -> dict:
        se = self.se

        def block(prefix, coefs):
            out = {}
            for name, est in coefs.items():
                s = se[f"{prefix}:{name}"]
                out[name] = {"est": est, "se": s, "t": est / s if s > 0 else None}
            return out

        wald, df = self.wald_chi2()
        ath_se = self.athrho_se
        return {
            "model": self.model,
            "spec": self.spec.to_dict(),
            "eq1": {"outcome": self.spec.eq1.outcome, "coefficients": block("eq1", self.eq1_coefs)},
            "eq2": {"outcome": self.spec.eq2.outcome, "coefficients": block("eq2", self.eq2_coefs)},
            "athrho": {"est": self.athrho, "se": ath_se, "t": self.athrho / ath_se if ath_se > 0 else None},
            "rho": {"est": self.rho, "se": self.rho_se},
            "boundary_warning": self.boundary_warning,
            "loglik": self.loglik,
            "chi2": wald,
            "chi2_df": df,
            "chi2_p": float(stats.chi2.sf(wald, df)),
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "param_names": self.param_names,
            "vcov": self.vcov.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BiprobitFit":
        spec = BiprobitSpec.from_dict(d["spec"])
        return cls(
            spec=spec,
            eq1_coefs={k: float(v["est"]) for k, v in d["eq1"]["coefficients"].items()},
            eq2_coefs={k: float(v["est"]) for k, v in d["eq2"]["coefficients"].items()},
            athrho=float(d["athrho"]["est"]),
            vcov=np.asarray(d["vcov"], dtype=float),
            loglik=float(d["loglik"]),
            n=int(d["n"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            gradient_norm=float(d.get("gradient_norm", math.nan)),
        )


@dataclass(frozen=True)
class BiprobitOptions:
    gtol: float = 1e-6
    ftol: float = 1e-10
    maxiter: int = 500
    separation_bound: float = 50.0


def _pd_inverse(negH: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (negH + negH.T))
    floor = max(1e-8, 1e-6 * float(np.max(np.abs(vals))))
    vals = np.maximum(np.abs(vals), floor)
    return (vecs / vals) @ vecs.T


def fit_biprobit(spec: BiprobitSpec, ds: Dataset, options: BiprobitOptions | None = None) -> BiprobitFit:
    """Maximize the joint likelihood over (b1, b2, athrho).

    Starting values come from the two univariate probits on the same
    sample with athrho = 0.  Optimization is BFGS with step halving,
    preconditioned by the numerical Hessian at the start; the reported
    covariance is the inverse numerical Hessian (from analytic gradients)
    at the optimum.  A correlation beyond +/-0.999 sets
    ``boundary_warning`` but is not an error.
    """
    options = options or BiprobitOptions()
    if not spec.excluded:
        warnings.warn(
            "no exclusion restriction: every equation-1 regressor also appears in equation 2, "
            "identification rests on functional form",
            UserWarning,
            stacklevel=2,
        )
    sample = ds.complete_cases(spec.variables)
    arr = _Arrays(spec, sample)
    check_binary(arr.y1, spec.eq1.outcome)
    check_binary(arr.y2, spec.eq2.outcome)
    check_rank(arr.X1, spec.eq1.param_names)
    check_rank(arr.X2, spec.eq2.param_names)

    popts = ProbitOptions(separation_bound=options.separation_bound)
    u1 = fit_probit(spec.eq1, sample, popts)
    u2 = fit_probit(ModelSpec(spec.eq2.outcome, spec.eq2.regressors), sample, popts)
    theta0 = np.concatenate([u1.params, u2.params, [0.0]])

    grad = lambda th: arr.fg(th)[1]  # noqa: E731
    H0 = numerical_hessian(grad, theta0)
    res = bfgs_maximize(
        arr.fg,
        theta0,
        _pd_inverse(-H0),
        gtol=options.gtol,
        ftol=options.ftol,
        maxiter=options.maxiter,
        on_step=separation_guard(options.separation_bound, skip=[theta0.size - 1]),
    )
    H = numerical_hessian(grad, res.x)
    vcov, ok = covariance_from_hessian(H)
    b1, b2, ath = arr.split(res.x)
    fit = BiprobitFit(
        spec=spec,
        eq1_coefs=dict(zip(spec.eq1.param_names, map(float, b1))),
        eq2_coefs=dict(zip(spec.eq2.param_names, map(float, b2))),
        athrho=ath,
        vcov=vcov,
        loglik=float(res.fun),
        n=int(arr.y1.size),
        converged=res.converged,
        iterations=res.iterations,
        gradient_norm=res.gradient_norm,
        message=res.message if ok else res.message + "; information matrix singular, pseudo-inverse used",
    )
    if fit.boundary_warning:
        warnings.warn(f"correlation estimate at the boundary (rho = {fit.rho:.6f})", UserWarning, stacklevel=2)
    if not res.converged:
        raise ConvergenceError(f"bivariate probit did not converge: {res.message}", result=fit)
    return fit


def lr_test_rho(joint: BiprobitFit, restricted_eq1: FitResult, restricted_eq2: FitResult, alpha: float = 0.05) -> TestResult:
    """LR test of rho = 0 against two univariate fits of the same equations."""
    for label, eq, fit in (("1", joint.spec.eq1, restricted_eq1), ("2", joint.spec.eq2, restricted_eq2)):
        if fit.spec.outcome != eq.outcome or fit.spec.regressors != eq.regressors:
            raise SpecError(
                f"restricted equation {label} ({fit.spec.outcome} ~ {list(fit.spec.regressors)}) does not match "
                f"the joint model ({eq.outcome} ~ {list(eq.regressors)})"
            )
    restricted = restricted_eq1.loglik + restricted_eq2.loglik
    return lr_test(joint.loglik, restricted, 1, name="LR test of rho=0", alpha=alpha)


@dataclass(frozen=True)
class ExogeneityReport:
    variable: str
    eta_univariate: float
    t_univariate: float
    eta_joint: float
    t_joint: float
    se_joint: float
    ratio: float
    sign_agreement: bool
    difference: float
    endogeneity_indicated: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def exogeneity_diagnostic(univ_eq2: FitResult, joint: BiprobitFit) -> ExogeneityReport:
    """Compare the y1 coefficient between the independent and the joint fit.

    Endogeneity is flagged when the sign flips or the estimates differ by
    more than two joint standard errors.
    """
    var = joint.spec.eq2.endogenous_regressor or joint.spec.eq1.outcome
    if var not in univ_eq2.coefficients:
        raise SpecError(f"univariate fit lacks the {var!r} coefficient")
    if var not in joint.eq2_coefs:
        raise SpecError(f"joint fit lacks the {var!r} coefficient")
    eta_u = univ_eq2.coefficients[var]
    se_u = univ_eq2.se[var]
    eta_j = joint.eq2_coefs[var]
    se_j = joint.se[f"eq2:{var}"]
    agree = math.copysign(1.0, eta_u) == math.copysign(1.0, eta_j)
    diff = eta_j - eta_u
    return ExogeneityReport(
        variable=var,
        eta_univariate=eta_u,
        t_univariate=eta_u / se_u if se_u > 0 else math.nan,
        eta_joint=eta_j,
        t_joint=eta_j / se_j if se_j > 0 else math.nan,
        se_joint=se_j,
        ratio=eta_j / eta_u if eta_u != 0 else math.inf,
        sign_agreement=agree,
        difference=diff,
        endogeneity_indicated=(not agree) or abs(diff) > 2.0 * se_j,
    )


def render_table3(univ: FitResult | None, joint: BiprobitFit, lr: TestResult | None = None) -> str:
    """Side-by-side univariate / bivariate coefficient table."""
    se = joint.se
    rows: list[tuple[str, str, str, str, str]] = []

    def fmt(x):
        return "" if x is None or (isinstance(x, float) and not math.isfinite(x)) else f"{x:.2f}"

    def add_eq(k, eq, coefs, univ_fit):
        rows.append((f"Dependent {eq.outcome}", "", "", "", ""))
        ut = univ_fit.tvalues if univ_fit is not None else {}
        for name in eq.regressors + (CONST,):
            s = se[f"eq{k}:{name}"]
            uc = univ_fit.coefficients.get(name) if univ_fit is not None else None
            rows.append(("  " + name, fmt(uc), fmt(ut.get(name)), fmt(coefs[name]), fmt(coefs[name] / s if s > 0 else None)))

    add_eq(2, joint.spec.eq2, joint.eq2_coefs, univ)
    add_eq(1, joint.spec.eq1, joint.eq1_coefs, None)
    ath_se = joint.athrho_se
    rows.append(("Athrho", "", "", fmt(joint.athrho), fmt(joint.athrho / ath_se if ath_se > 0 else None)))
    rows.append(("rho", "", "", fmt(joint.rho), ""))
    rows.append(("Log likelihood", fmt(univ.loglik) if univ else "", "", fmt(joint.loglik), ""))
    wald, _ = joint.wald_chi2()
    rows.append(("Chi-squared", fmt(univ.lr_chi2) if univ else "", "", fmt(wald), ""))
    rows.append(("N", str(univ.n) if univ else "", "", str(joint.n), ""))

    w0 = max(len(r[0]) for r in rows)
    head = f"{'Equation, Variable':<{w0}}  {'Univariate':>10}  {'t':>7}  {'Bivariate':>10}  {'t':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r[0]:<{w0}}  {r[1]:>10}  {r[2]:>7}  {r[3]:>10}  {r[4]:>7}")
    if joint.boundary_warning:
        lines.append("note: correlation at the boundary (|rho| > 0.999)")
    if lr is not None:
        p = lr.p_value
        lines.append(f"Likelihood-ratio test of rho=0: chi2({int(lr.df)}) = {lr.statistic:.3f}  Prob > chi2 = {p:.4f}")
    return "\n".join(lines)
