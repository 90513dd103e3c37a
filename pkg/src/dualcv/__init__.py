"""Valuation with two payment vehicles (cash and labor) via a recursive bivariate probit."""

from .biprobit import BiprobitFit, BiprobitSpec, exogeneity_diagnostic, fit_biprobit, lr_test_rho
from .bvn import bvn_cdf, quadrant_probs
from .data import BidDesign, Dataset, SurveyRecord, consistency_filter, load_csv, summarize, write_csv
from .diagnostics import anchoring_test, endowment_comparison, response_pattern_shares
from .effects import ame
from .errors import (
    ConvergenceError,
    DataParseError,
    DataValidationError,
    DomainError,
    DualCVError,
    SchemaError,
    SeparationError,
    SpecError,
    WelfareSignError,
)
from .probit import FitResult, ModelSpec, fit_probit
from .simulate import DgpConfig, generate, monte_carlo, survey_profile
from .welfare import ShadowWage, cv_labor, cv_money, cv_total, shadow_wage, welfare_report

__version__ = "0.1.0"
