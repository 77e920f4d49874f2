"""Risk-constrained CRRA portfolio optimization via quadratic BSDEs.

Solves for the optimal investment strategy of a CRRA investor whose trading
strategies must satisfy dynamic distortion-risk-measure constraints
(VaR / TVaR / LEL or a generic distortion), by solving the quadratic BSDE
characterizing the value function with a regression Monte Carlo forward
scheme and projecting the transformed control onto the time- and
state-dependent acceptance sets.
"""

from .bsde import (
    BsdeSolution,
    CrraDriver,
    DistortionConstraintFactory,
    DriverParams,
    IndicatorBasis,
    PicardOptions,
    PolynomialBasis,
    default_truncation_level,
    driver_h,
    opportunity_process,
    solve_bsde,
    truncate_driver,
    z_tilde,
)
from .constraint import (
    ConstraintSpec,
    ProjectionResult,
    boundary_radius,
    contains,
    project,
    project_bruteforce,
)
from .errors import (
    ConfigError,
    CrraBsdeError,
    DegenerateDistortion,
    NoConvergence,
    NonpositiveInitialWealth,
    NonpositiveWealth,
    PreimageResidual,
    QuadratureFailure,
    RegressionRankDeficient,
    SingularCovariance,
    UnboundedDirection,
)
from .market import (
    MarketModel,
    PathSet,
    TimeGrid,
    constant_coefficients,
    indicator_drift_coefficients,
    market_price_of_risk,
    merton_proportion,
    portfolio_stats,
    simulate_paths,
    wealth_path,
)
from .portfolio import (
    StrategyField,
    constant_policy,
    martingale_diagnostic,
    optimal_policy,
    optimal_strategy,
    three_fund_decompose,
    value_function,
)
from .risk import Distortion, RiskParams, mc_loss_risk_oracle, risk_functional, rho_of_strategy

__version__ = "0.1.0"
