"""Tail asymptotics and non-asymptotic bounds for self-normalized sums.

The package computes closed-form predictions for P(T > n^(1-1/beta) - eps)
where T is a sum normalized by its own beta-norm, verifies every constant
against independent oracles (exact sphere law, region quadrature, discrete
enumeration, Monte Carlo), and reports confirmed vs discrepant values in a
machine-checkable ledger.
"""

__version__ = "0.1.0"

from .analytic_core import (
    AntiHessianSpec,
    CriterionPoint,
    StructuredMatrix,
    anti_hessian_entries,
    build_anti_hessian,
    det_anti_hessian,
    det_anti_hessian_published,
    det_eigen_closed,
    det_numeric,
    g_value,
    hessian_fd,
)
from .asymptotics import (
    GammaVariantQuery,
    KConstant,
    Prediction,
    TailQuery,
    k_constant,
    log_growth_check,
    log_growth_limit,
    predict_gamma_variant,
    predict_tail,
    reference_bound,
)
from .bounds import (
    BoundsCertificate,
    CurvatureResult,
    SandwichReport,
    curvature_functionals,
    envelope_bounds,
    validate_sandwich,
)
from .density import (
    DensityModel,
    QuadratureError,
    RadialProfileQuery,
    h_profile,
    parse_model,
    weighted_profile_mirror,
)
from .ledger import LedgerEntry, VerifyReport, run_verify
from .montecarlo import (
    MaxSumComparison,
    MCEstimate,
    SamplerSpec,
    StatisticSpec,
    compare_max_vs_sum,
    estimate_tail,
    sample_batch,
    statistic,
    statistic_batch,
    wilson_interval,
)
from .oracles import (
    CoefficientFit,
    OracleResult,
    degenerate_component_check,
    leading_coeff_fit,
    rademacher_tail_exact,
    region_tail_integral,
    regularized_incomplete_beta,
    sphere_tail_exact,
    tail_window,
)

__all__ = [
    "__version__",
    "AntiHessianSpec",
    "CriterionPoint",
    "StructuredMatrix",
    "anti_hessian_entries",
    "build_anti_hessian",
    "det_anti_hessian",
    "det_anti_hessian_published",
    "det_eigen_closed",
    "det_numeric",
    "g_value",
    "hessian_fd",
    "GammaVariantQuery",
    "KConstant",
    "Prediction",
    "TailQuery",
    "k_constant",
    "log_growth_check",
    "log_growth_limit",
    "predict_gamma_variant",
    "predict_tail",
    "reference_bound",
    "BoundsCertificate",
    "CurvatureResult",
    "SandwichReport",
    "curvature_functionals",
    "envelope_bounds",
    "validate_sandwich",
    "DensityModel",
    "QuadratureError",
    "RadialProfileQuery",
    "h_profile",
    "parse_model",
    "weighted_profile_mirror",
    "LedgerEntry",
    "VerifyReport",
    "run_verify",
    "MaxSumComparison",
    "MCEstimate",
    "SamplerSpec",
    "StatisticSpec",
    "compare_max_vs_sum",
    "estimate_tail",
    "sample_batch",
    "statistic",
    "statistic_batch",
    "wilson_interval",
    "CoefficientFit",
    "OracleResult",
    "degenerate_component_check",
    "leading_coeff_fit",
    "rademacher_tail_exact",
    "region_tail_integral",
    "regularized_incomplete_beta",
    "sphere_tail_exact",
    "tail_window",
]
