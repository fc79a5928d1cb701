"""Nash equilibria of portfolio games with probabilistic outperformance constraints.

Agents in a complete Black-Scholes market maximise CRRA utility of terminal
wealth subject to ``P(X_i >= sum_j beta_ij X_j) >= alpha_i``. The package
solves the two-agent log and power games, the n-agent log games, a single
agent benchmarked against the stock, and replicates log payoffs by
digital-band strategies.
"""

__version__ = "0.1.0"

from nashvar.errors import ConvergenceError, InfeasibleError, NashVarError, NoEquilibriumError
from nashvar.market import (
    INF,
    LognormalLaw,
    MarketParams,
    PiecewiseWealth,
    ZInterval,
    expected_utility,
    interval_upper_bound,
    outperformance_probability,
    price,
)
from nashvar.multi_log import GameSpecN, solve_disjoint, solve_partition, verify_nash_n
from nashvar.two_log import CaseTag, GameSpec2, solve_benchmark, solve_log2
from nashvar.two_power import FeasibilityCase, solve_power2, verify_lagrangian

__all__ = [
    "CaseTag", "ConvergenceError", "FeasibilityCase", "GameSpec2", "GameSpecN", "INF",
    "InfeasibleError", "LognormalLaw", "MarketParams", "NashVarError", "NoEquilibriumError",
    "PiecewiseWealth", "ZInterval", "expected_utility", "interval_upper_bound",
    "outperformance_probability", "price", "solve_benchmark", "solve_disjoint", "solve_log2",
    "solve_partition", "solve_power2", "verify_lagrangian", "verify_nash_n", "__version__",
]
