"""scikit-learn style wrappers around the solvers.

``fit`` solves the game (the data argument is ignored) and ``predict`` maps
state-price-density values ``z`` to terminal wealths, one column per agent.
Parameters follow the usual estimator conventions, so ``get_params`` /
``set_params`` and ``sklearn.base.clone`` work.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from nashvar.market import MarketParams
from nashvar.multi_log import GameSpecN, solve_disjoint, solve_partition
from nashvar.two_log import GameSpec2, relabel_back, solve_benchmark, solve_log2
from nashvar.two_power import solve_power2


class _WealthEstimator(BaseEstimator):
    def _market(self):
        return MarketParams.one_stock(self.drift, self.volatility, self.horizon)

    def predict(self, z):
        """Terminal wealth at each ``z``; returns an ``(n_z, n_agents)`` array."""
        check_is_fitted(self, "wealths_")
        z = check_array(np.asarray(z, dtype=float).reshape(-1, 1), ensure_min_samples=1).ravel()
        if np.any(z <= 0):
            raise ValueError("z values must be positive")
        return np.column_stack([w(z) for w in self.wealths_])


class TwoAgentLogEquilibrium(_WealthEstimator):
    """Two-agent log-utility equilibrium; agents keep the caller's order in
    ``predict``."""

    def __init__(self, x01=3.0, x02=2.0, alpha1=1.0, alpha2=0.2, beta1=0.9, beta2=1.0,
                 drift=0.03, volatility=0.2, horizon=4.0, a2_choice=None):
        self.x01 = x01
        self.x02 = x02
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.beta1 = beta1
        self.beta2 = beta2
        self.drift = drift
        self.volatility = volatility
        self.horizon = horizon
        self.a2_choice = a2_choice

    def fit(self, X=None, y=None):
        law = self._market().law()
        game = GameSpec2(self.x01, self.x02, self.alpha1, self.alpha2, self.beta1, self.beta2)
        self.result_ = solve_log2(game, law, self.a2_choice)
        self.case_tag_ = self.result_.case_tag
        if self.result_.has_equilibrium:
            self.wealths_ = relabel_back(self.result_)
        return self


class TwoAgentPowerEquilibrium(_WealthEstimator):
    def __init__(self, x01=3.0, x02=2.0, alpha2=0.5, beta1=0.9, beta2=0.5, gamma=0.7,
                 drift=0.03, volatility=0.2, horizon=4.0):
        self.x01 = x01
        self.x02 = x02
        self.alpha2 = alpha2
        self.beta1 = beta1
        self.beta2 = beta2
        self.gamma = gamma
        self.drift = drift
        self.volatility = volatility
        self.horizon = horizon

    def fit(self, X=None, y=None):
        law = self._market().law()
        game = GameSpec2(self.x01, self.x02, 1.0, self.alpha2, self.beta1, self.beta2, self.gamma)
        self.result_ = solve_power2(game, law)
        self.feasibility_case_ = self.result_.feasibility_case
        if self.result_.wealth1 is not None:
            w = (self.result_.wealth1, self.result_.wealth2)
            self.wealths_ = w[::-1] if game.relabeled else w
        return self


class DisjointLogEquilibrium(_WealthEstimator):
    def __init__(self, x0=(5.0, 4.0, 3.0, 2.0), alpha=0.2, beta=0.3,
                 drift=0.03, volatility=0.2, horizon=4.0):
        self.x0 = x0
        self.alpha = alpha
        self.beta = beta
        self.drift = drift
        self.volatility = volatility
        self.horizon = horizon

    def fit(self, X=None, y=None):
        law = self._market().law()
        self.game_ = GameSpecN(self.x0, self.alpha, self.beta)
        self.result_ = solve_disjoint(self.game_, law)
        self.lambdas_ = np.array(self.game_.to_caller(self.result_.lambdas))
        self.wealths_ = tuple(self.game_.to_caller(self.result_.wealths))
        return self


class PartitionLogEquilibrium(_WealthEstimator):
    def __init__(self, x0=(3.0, 2.0, 1.0), alpha=0.4, beta=0.4, m=5,
                 drift=0.03, volatility=0.2, horizon=4.0):
        self.x0 = x0
        self.alpha = alpha
        self.beta = beta
        self.m = m
        self.drift = drift
        self.volatility = volatility
        self.horizon = horizon

    def fit(self, X=None, y=None):
        law = self._market().law()
        self.game_ = GameSpecN(self.x0, self.alpha, self.beta)
        self.result_ = solve_partition(self.game_, self.m, law)
        self.converged_ = self.result_.converged
        self.wealths_ = tuple(self.game_.to_caller(self.result_.wealths))
        return self


class BenchmarkPortfolio(_WealthEstimator):
    """Single log investor required to beat ``beta * S_T`` with probability ``alpha``."""

    def __init__(self, x0=0.3, beta=0.5, alpha=0.3, drift=0.03, volatility=0.2, horizon=4.0):
        self.x0 = x0
        self.beta = beta
        self.alpha = alpha
        self.drift = drift
        self.volatility = volatility
        self.horizon = horizon

    def fit(self, X=None, y=None):
        self.result_ = solve_benchmark(self.x0, self.beta, self.alpha, self._market())
        self.wealths_ = (self.result_.wealth,)
        return self
