"""Univariate probit by maximum likelihood (Newton-Raphson, analytic Hessian)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2

from .bvn import norm_cdf, norm_logcdf, norm_quantile
from .data import Dataset
from .errors import ConvergenceError, EstimationError, RankDeficientError, SeparationError, SpecError
from .optim import covariance_from_hessian, newton_maximize

CONST = "const"

__all__ = [
    "CONST",
    "ModelSpec",
    "FitResult",
    "ProbitOptions",
    "design_matrix",
    "probit_loglik",
    "fit_probit",
    "render_probit",
]


@dataclass(frozen=True)
class ModelSpec:
    """One binary-outcome equation; a constant is always the first parameter."""

    outcome: str
    regressors: tuple[str, ...]
    endogenous_regressor: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if len(set(self.regressors)) != len(self.regressors):
            raise SpecError(f"duplicate regressors in equation for {self.outcome!r}")
        if CONST in self.regressors:
            raise SpecError(f"{CONST!r} is implicit and must not be listed")
        if self.outcome in self.regressors:
            raise SpecError(f"outcome {self.outcome!r} listed among its own regressors")
        if self.endogenous_regressor is not None and self.endogenous_regressor not in self.regressors:
            raise SpecError(f"endogenous regressor {self.endogenous_regressor!r} must be a regressor")

    @property
    def param_names(self) -> tuple[str, ...]:
        return (CONST,) + self.regressors

    @property
    def variables(self) -> tuple[str, ...]:
        return (self.outcome,) + self.regressors

    def to_dict(self) -> dict:
        d = {"outcome": self.outcome, "regressors": list(self.regressors)}
        if self.endogenous_regressor is not None:
            d["endogenous_regressor"] = self.endogenous_regressor
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        try:
            return cls(d["outcome"], tuple(d.get("regressors", ())), d.get("endogenous_regressor"))
        except KeyError as exc:
            raise SpecError(f"equation spec missing {exc.args[0]!r}") from None


def design_matrix(spec: ModelSpec, ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Outcome vector and regressor matrix (constant first) for ``ds``."""
    for name in spec.variables:
        if not ds.has(name):
            raise SpecError(f"variable {name!r} not in dataset")
    y = np.asarray(ds.column(spec.outcome))
    X = np.column_stack([np.ones(ds.n)] + [ds.column(r) for r in spec.regressors])
    return y, X


def _as_vector(spec: ModelSpec, coefs) -> np.ndarray:
    if isinstance(coefs, Mapping):
        missing = [p for p in spec.param_names if p not in coefs]
        if missing:
            raise SpecError(f"coefficients missing for {missing}")
        return np.array([float(coefs[p]) for p in spec.param_names])
    beta = np.asarray(coefs, dtype=float).ravel()
    if beta.size != len(spec.param_names):
        raise SpecError(f"expected {len(spec.param_names)} coefficients, got {beta.size}")
    return beta


def _probit_fgh(y: np.ndarray, X: np.ndarray, beta: np.ndarray, hessian: bool = True):
    q = 2.0 * y - 1.0
    z = q * (X @ beta)
    logF = norm_logcdf(z)
    ll = float(np.sum(logF))
    # inverse Mills ratio phi(z)/Phi(z), stable in the lower tail
    lam = np.exp(-0.5 * z * z - 0.5 * math.log(2 * math.pi) - logF)
    grad = X.T @ (q * lam)
    if not hessian:
        return ll, grad
    w = lam * (lam + z)
    H = -(X.T * w) @ X
    return ll, grad, H


def probit_loglik(spec: ModelSpec, ds: Dataset, coefs) -> tuple[float, np.ndarray]:
    """Log-likelihood and analytic gradient at ``coefs``."""
    beta = _as_vector(spec, coefs)
    y, X = design_matrix(spec, ds.complete_cases(spec.variables))
    return _probit_fgh(y, X, beta, hessian=False)


@dataclass
class FitResult:
    """Estimated probit equation."""

    spec: ModelSpec
    coefficients: dict[str, float]
    vcov: np.ndarray
    loglik: float
    n: int
    converged: bool
    iterations: int
    gradient_norm: float
    null_loglik: float | None = None
    message: str = ""
    model: str = field(default="probit")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.coefficients[p] for p in self.spec.param_names])

    @property
    def se(self) -> dict[str, float]:
        d = np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))
        return dict(zip(self.spec.param_names, map(float, d)))

    @property
    def tvalues(self) -> dict[str, float]:
        se = self.se
        return {k: (v / se[k] if se[k] > 0 else math.nan) for k, v in self.coefficients.items()}

    @property
    def lr_chi2(self) -> float | None:
        """LR statistic against the intercept-only model."""
        if self.null_loglik is None:
            return None
        return max(0.0, 2.0 * (self.loglik - self.null_loglik))

    def predict(self, ds: Dataset) -> np.ndarray:
        _, X = design_matrix(self.spec, ds)
        return norm_cdf(X @ self.params)

    def to_dict(self) -> dict:
        se, t = self.se, self.tvalues
        lr = self.lr_chi2
        df = len(self.spec.regressors)
        return {
            "model": self.model,
            "spec": self.spec.to_dict(),
            "coefficients": {k: {"est": v, "se": se[k], "t": t[k]} for k, v in self.coefficients.items()},
            "loglik": self.loglik,
            "chi2": lr,
            "chi2_df": df,
            "chi2_p": float(chi2.sf(lr, df)) if lr is not None and df > 0 else None,
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "param_names": list(self.spec.param_names),
            "vcov": self.vcov.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FitResult":
        spec = ModelSpec.from_dict(d["spec"])
        coefs = {k: float(v["est"]) for k, v in d["coefficients"].items()}
        null = None
        if d.get("chi2") is not None:
            null = float(d["loglik"]) - 0.5 * float(d["chi2"])
        return cls(
            spec=spec,
            coefficients=coefs,
            vcov=np.asarray(d["vcov"], dtype=float),
            loglik=float(d["loglik"]),
            n=int(d["n"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            gradient_norm=float(d.get("gradient_norm", math.nan)),
            null_loglik=null,
        )


@dataclass(frozen=True)
class ProbitOptions:
    tol: float = 1e-8
    maxiter: int = 200
    separation_bound: float = 50.0


def check_binary(y: np.ndarray, name: str) -> None:
    if y.size == 0:
        raise EstimationError(f"no complete observations for {name!r}")
    if not np.all((y == 0) | (y == 1)):
        raise EstimationError(f"outcome {name!r} must be binary")
    if y.min() == y.max():
        raise SeparationError(f"outcome {name!r} has no variation (all {int(y[0])})")


def check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficientError(f"regressor matrix has rank {rank} < {X.shape[1]} ({', '.join(names)})")


def separation_guard(bound: float, skip: Sequence[int] = ()):
    """Step callback raising SeparationError once coefficients run away."""
    skip = set(skip)

    def on_step(x, f_old, f_new):
        mags = [abs(v) for i, v in enumerate(x) if i not in skip]
        if mags and max(mags) > bound and f_new - f_old > 0:
            raise SeparationError(
                f"coefficient magnitude {max(mags):.1f} exceeds {bound:g} while the likelihood still improves; "
                "a regressor (nearly) perfectly predicts the outcome"
            )

    return on_step


def fit_probit(spec: ModelSpec, ds: Dataset, options: ProbitOptions | None = None) -> FitResult:
    """Maximum-likelihood probit fit.

    Rows with a missing value in any model variable are dropped first.
    Starts from zero slopes and the intercept ``Phi^-1(mean(y))``; the
    covariance is the inverse observed information at the optimum.

    Raises
    ------
    SeparationError, RankDeficientError
        Data do not identify the coefficients.
    ConvergenceError
        Iteration limit hit; ``exc.result`` holds the unconverged fit.
    """
    options = options or ProbitOptions()
    sample = ds.complete_cases(spec.variables)
    y, X = design_matrix(spec, sample)
    check_binary(y, spec.outcome)
    check_rank(X, spec.param_names)

    ybar = float(y.mean())
    beta0 = np.zeros(X.shape[1])
    beta0[0] = norm_quantile(ybar)
    res = newton_maximize(
        lambda b: _probit_fgh(y, X, b),
        beta0,
        tol=options.tol,
        maxiter=options.maxiter,
        on_step=separation_guard(options.separation_bound),
    )
    # complete separation can also end with a vanishing gradient before the bound trips
    if np.min((2.0 * y - 1.0) * (X @ res.x)) > 5.0:
        raise SeparationError(f"regressors perfectly predict {spec.outcome!r}; the MLE does not exist")
    _, _, H = _probit_fgh(y, X, res.x)
    vcov, _ = covariance_from_hessian(H)
    null = float(y.size * (ybar * math.log(ybar) + (1 - ybar) * math.log(1 - ybar)))
    fit = FitResult(
        spec=spec,
        coefficients=dict(zip(spec.param_names, map(float, res.x))),
        vcov=vcov,
        loglik=float(res.fun),
        n=int(y.size),
        converged=res.converged,
        iterations=res.iterations,
        gradient_norm=res.gradient_norm,
        null_loglik=null,
        message=res.message,
    )
    if not res.converged:
        raise ConvergenceError(f"probit for {spec.outcome!r} did not converge: {res.message}", result=fit)
    return fit


def render_probit(fit: FitResult) -> str:
    se, t = fit.se, fit.tvalues
    width = max(12, *(len(n) for n in fit.spec.param_names))
    lines = [f"Probit, dependent {fit.spec.outcome}", f"{'Variable':<{width}}  {'Coef.':>8}  {'t':>7}"]
    for name in fit.spec.regressors + (CONST,):
        lines.append(f"{name:<{width}}  {fit.coefficients[name]:>8.2f}  {t[name]:>7.2f}")
    lines.append(f"{'Log likelihood':<{width}}  {fit.loglik:>8.2f}")
    if fit.lr_chi2 is not None:
        lines.append(f"{'Chi-squared':<{width}}  {fit.lr_chi2:>8.2f}")
    lines.append(f"{'N':<{width}}  {fit.n:>8d}")
    return "\n".join(lines)
