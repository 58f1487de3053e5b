"""Empirical-likelihood estimation of Levy return models.

Combines characteristic-function constraints on observed log-returns with
option-price constraints to estimate the parameters of Gaussian, lognormal
jump-diffusion and double-exponential jump-diffusion return models, with a
plug-in sandwich covariance and a Monte Carlo replication harness.
"""

from . import errors
from .asymptotics import (
    MonotonicityReport,
    SandwichParts,
    estimate_jacobian,
    estimate_second_moments,
    monotonicity_check,
    sandwich_parts,
    sandwich_sigma,
)
from .el import (
    ConstraintSet,
    EstimationResult,
    InnerSolution,
    ResidualBlock,
    aggregate_returns,
    build_residuals,
    default_bounds,
    estimate,
    integrated_logel,
    solve_inner,
    total_objective,
)
from .harness import (
    ReplicationReport,
    ReportRow,
    RunConfig,
    build_params,
    run_estimate,
    run_price,
    run_replication,
    synthesize_quotes,
)
from .models import (
    BsParams,
    KouParams,
    MarketEnv,
    MertonParams,
    RiskPreference,
    cf_bs,
    cf_kou,
    cf_merton,
    characteristic_function,
    density_kou_approx,
    density_merton,
    mgf_exponent,
    rn_bs,
    rn_derivative,
    rn_kou,
    rn_merton,
    rn_risk_premium,
)
from .pricing import (
    OptionQuote,
    PricerConfig,
    price,
    price_bs,
    price_carr_madan,
    price_laplace,
    price_merton_series,
)
from .simulate import (
    ReturnSeries,
    SimSpec,
    simulate,
    simulate_bs,
    simulate_kou,
    simulate_merton,
)

__version__ = "0.1.0"
