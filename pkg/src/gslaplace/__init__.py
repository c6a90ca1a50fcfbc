"""Gaver-Stehfest Laplace-transform solvers for the Black-Scholes equation.

Direct inversion for constant volatility, plus synchronous and asynchronous
frozen-coefficient iterations for the quasilinear implied-volatility model.
"""

from .asynchronous import ActivationPolicy, AsyncTrace, DelayModel, async_solve, replay
from .bsm import (
    MarketParams,
    TransformedParams,
    black_scholes_call,
    diffusion_ratio,
    frequency_boundary,
    from_computational,
    payoff,
    to_computational,
    transform_params,
)
from .direct import DirectResult, direct_solve, price_at
from .estimator import LaplacePricer
from .exceptions import InvalidArgument, NumericalBreakdown, OutOfDomain
from .freq_solver import (
    FrequencySolution,
    GridFunction,
    SpatialGrid,
    solve_frequency,
    solve_frequency_linear,
)
from .stehfest import (
    FrequencyNodes,
    StehfestWeights,
    UnifiedNodes,
    compute_weights,
    frequency_nodes,
    gaver_stehfest_nodes,
    invert,
    unified_invert,
)
from .sync import ConvergenceReport, IterationConfig, Status, successive_steps, sync_solve

__version__ = "0.1.0"

__all__ = [
    "ActivationPolicy",
    "AsyncTrace",
    "DelayModel",
    "async_solve",
    "replay",
    "MarketParams",
    "TransformedParams",
    "black_scholes_call",
    "diffusion_ratio",
    "frequency_boundary",
    "from_computational",
    "payoff",
    "to_computational",
    "transform_params",
    "DirectResult",
    "direct_solve",
    "price_at",
    "LaplacePricer",
    "InvalidArgument",
    "NumericalBreakdown",
    "OutOfDomain",
    "FrequencySolution",
    "GridFunction",
    "SpatialGrid",
    "solve_frequency",
    "solve_frequency_linear",
    "FrequencyNodes",
    "StehfestWeights",
    "UnifiedNodes",
    "compute_weights",
    "frequency_nodes",
    "gaver_stehfest_nodes",
    "invert",
    "unified_invert",
    "ConvergenceReport",
    "IterationConfig",
    "Status",
    "successive_steps",
    "sync_solve",
]
