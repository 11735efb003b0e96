"""Utility-indifference pricing and hedging for energy structured contracts."""

__version__ = "0.1.0"

from .boundary import BoundaryContext, BoundaryPolicy, apply_boundary
from .closedform import (LinearDynamicsParams, RiccatiSolution, no_claim_gradient,
                         no_claim_value, no_claim_value_cv, solve_riccati)
from .contracts import (ClampSpec, ContractSpec, StorageSpec, SwingSpec,
                        hamiltonian_sup, running_payoff, storage_contract,
                        storage_rate_bounds, storage_reparam, swing_contract,
                        terminal_penalty)
from .errors import (BlowupError, CapError, CflError, ConfigError, ControlRangeError,
                     PricingError, RiccatiBlowupError, SingularForwardCovError,
                     VerificationFailure)
from .grid import Grid, Surface
from .market import (AuditReport, CarteaVillaplanaModel, ConstantCorrelationModel,
                     FactorDynamics, ForwardDynamics, MarketModel, audit_assumptions,
                     effective_drift, sharpe_term, unspanned_cov)
from .solver import (NoClaimTable, cfl_timestep, riccati_gradient, solve_dual_pde,
                     solve_log_value_pde, solve_no_claim_1d, solve_risk_neutral_pde,
                     solve_uip_pde, uip_from_log_values, zero_gradient)
from .strategies import (StrategyBundle, cv_hedge_matrix, exercise_policy,
                         extract_strategies, hedge_strategy, investment_strategy,
                         switching_boundary)
from .verification import (DPConfig, DPResult, DualBound, PathSet, dp_value,
                           dual_lower_bound, girsanov_drift, simulate)
