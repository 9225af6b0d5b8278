"""Wild-bootstrap tests for linear restrictions and their worst-case size diagnostics."""

from .bootstrap import (
    BaseKind,
    BootstrapSchemeSpec,
    Centering,
    MultiplierBase,
    ResidualSpace,
    Support,
    SupportPoint,
    bootstrap_sample,
    bootstrapped_statistic,
    multiplier_support,
    pvalue,
    pvalues,
)
from .codes import ProcedureCode, RunConfig, equivalent_codes, parse_code
from .diagnostics import ThetaKind, ThetaReport, Verdict, theta, theta_minus_alpha_verdict
from .errors import (
    AssumptionViolation,
    CodeParseError,
    EnumerationCapError,
    RestrictionError,
    ScenarioInfeasible,
    SingularDesignError,
    WildSizeError,
)
from .linalg import (
    DEFAULT_TOLERANCES,
    FitResult,
    Leverages,
    RestrictedFitResult,
    TestingProblem,
    Tolerances,
    is_invertible,
    leverages,
    numerical_rank,
    ols_fit,
    restricted_fit,
)
from .search import (
    RejectionEstimate,
    SearchParams,
    SearchReport,
    VarianceVector,
    extreme_variance,
    mc_rejection_prob,
    nelder_mead_max,
    random_design,
    step1_search,
    step2_procedure,
)
from .statistics import (
    HcKind,
    StatisticSpec,
    StatisticValue,
    bootstrap_weights,
    check_assumption_1,
    check_assumption_2,
    hc_multipliers,
    statistic,
)

__version__ = "0.1.0"
