"""Two agents with logarithmic utility, and the single-agent stock benchmark.

Agent ``i`` maximises ``E ln X_i`` subject to ``E[Z_T X_i] = x0_i`` and
``P(X_i >= beta_j X_j) >= alpha_i``. Here ``beta1`` is the weight agent 2
puts on agent 1's wealth and ``beta2`` the weight agent 1 puts on agent 2's.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from scipy.optimize import brentq

from nashvar._validation import check_positive, check_unit
from nashvar.errors import InfeasibleError
from nashvar.market import (
    INF,
    Cell,
    LognormalLaw,
    MarketParams,
    PiecewiseWealth,
    ZInterval,
    outperformance_probability,
    price,
)


class CaseTag(str, enum.Enum):
    NO_EQUILIBRIUM = "NoEquilibrium"
    DEGENERATE_FAMILY = "DegenerateFamily"
    UNIQUE = "Unique"
    FAMILY_FREE_SET = "FamilyFreeSet"


@dataclass(frozen=True)
class GameSpec2:
    """Parameters of the two-agent game.

    On construction the agents are relabelled so that ``x01 >= x02``; the
    swap is recorded in ``relabeled``.
    """

    x01: float
    x02: float
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    gamma: float = 1.0
    relabeled: bool = False

    def __post_init__(self):
        check_positive("x01", self.x01)
        check_positive("x02", self.x02)
        for name in ("alpha1", "alpha2", "beta1", "beta2"):
            check_unit(name, getattr(self, name))
        check_positive("gamma", self.gamma)
        if self.x01 < self.x02:
            swapped = dict(x01=self.x02, x02=self.x01, alpha1=self.alpha2,
                           alpha2=self.alpha1, beta1=self.beta2, beta2=self.beta1)
            for k, v in swapped.items():
                object.__setattr__(self, k, float(v))
            object.__setattr__(self, "relabeled", not self.relabeled)


@dataclass(frozen=True)
class EquilibriumResult2:
    case_tag: CaseTag
    game: GameSpec2
    wealth1: PiecewiseWealth | None = None
    wealth2: PiecewiseWealth | None = None
    free_set: ZInterval | None = None
    lambda2: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def has_equilibrium(self) -> bool:
        return self.case_tag is not CaseTag.NO_EQUILIBRIUM


def _residuals(law, g, w1, w2, target_prob):
    prob = outperformance_probability(law, w2, [(g.beta1, w1)])
    return {
        "budget_residual_1": abs(price(law, w1) - g.x01),
        "budget_residual_2": abs(price(law, w2) - g.x02),
        "constraint_probability_2": prob,
        "probability_residual_2": abs(prob - target_prob),
        "constraint_probability_1": outperformance_probability(law, w1, [(g.beta2, w2)]),
    }


def solve_log2(g: GameSpec2, law: LognormalLaw,
               a2_choice: ZInterval | None = None) -> EquilibriumResult2:
    """All Nash equilibria of the two-agent log game.

    Families are represented by one member. In the free-set family the
    default set ``A2 = (0, z_{alpha2}]`` maximises ``E[X_2]``; any interval of
    probability ``alpha2`` may be passed as ``a2_choice`` instead.
    """
    if g.gamma != 1.0:
        raise ValueError("solve_log2 needs logarithmic utility (gamma = 1)")
    x1, x2, a1, a2, b1, b2 = g.x01, g.x02, g.alpha1, g.alpha2, g.beta1, g.beta2
    if a2_choice is not None:
        p = law.probability(a2_choice)
        if abs(p - a2) > 1e-10:
            raise ValueError(f"a2_choice has probability {p:.12g}, need alpha2 = {a2}")
    diag: dict = {"relabeled": g.relabeled}
    if x2 < a2 * b1 * x1:
        diag["reason"] = f"x02={x2} < alpha2*beta1*x01={a2 * b1 * x1}"
        return EquilibriumResult2(CaseTag.NO_EQUILIBRIUM, g, diagnostics=diag)

    merton1 = PiecewiseWealth.merton(x1)
    if a1 == a2 == b1 == b2 == 1.0:
        if not math.isclose(x1, x2, rel_tol=1e-12):
            diag["reason"] = "alpha = beta = 1 requires equal initial capitals"
            return EquilibriumResult2(CaseTag.NO_EQUILIBRIUM, g, diagnostics=diag)
        diag.update(_residuals(law, g, merton1, merton1, 1.0))
        return EquilibriumResult2(CaseTag.DEGENERATE_FAMILY, g, merton1, merton1,
                                  diagnostics=diag)

    if b1 * b2 == 1.0:
        diag["beta_product_one"] = True
    if a2 == 1.0 or x2 >= b1 * x1:
        # the unconstrained solutions already satisfy both constraints a.s.
        w2 = PiecewiseWealth.merton(x2)
        diag["branch"] = "b" if a2 == 1.0 else "c-unconstrained"
        diag.update(_residuals(law, g, merton1, w2, 1.0))
        return EquilibriumResult2(CaseTag.UNIQUE, g, merton1, w2, diagnostics=diag)

    lam2 = (x2 - a2 * b1 * x1) / (1.0 - a2)
    diag["branch"] = "c-family"
    if lam2 <= 0.0:
        diag["boundary"] = True
        diag["reason"] = "x02 = alpha2*beta1*x01: off-set wealth would vanish"
        return EquilibriumResult2(CaseTag.NO_EQUILIBRIUM, g, lambda2=lam2, diagnostics=diag)
    if a2 == 0.0:
        # A2 is a null set: every member equals the Merton wealth a.s.
        w2 = PiecewiseWealth.merton(lam2)
        diag.update(_residuals(law, g, merton1, w2, 0.0))
        diag["probability_residual_2"] = 0.0
        return EquilibriumResult2(CaseTag.FAMILY_FREE_SET, g, merton1, w2,
                                  lambda2=lam2, diagnostics=diag)
    a2_set = a2_choice or ZInterval(0.0, law.quantile(a2))
    w2 = PiecewiseWealth.from_sets(lam2, [(a2_set, b1 * x1)])
    diag.update(_residuals(law, g, merton1, w2, a2))
    return EquilibriumResult2(CaseTag.FAMILY_FREE_SET, g, merton1, w2,
                              free_set=a2_set, lambda2=lam2, diagnostics=diag)


@dataclass(frozen=True)
class BenchmarkSolution:
    wealth: PiecewiseWealth
    lam: float
    lambda_alpha: float
    band: ZInterval | None
    constraint_probability: float
    budget_residual: float


def benchmark_payoff(m: MarketParams, beta: float) -> tuple[float, float]:
    """``beta * S_T`` as ``coeff * Z_T**exponent``."""
    a, e = m.stock_exponent()
    return beta * a, e


def solve_benchmark(x0: float, beta: float, alpha: float, m: MarketParams) -> BenchmarkSolution:
    """Maximise ``E ln X`` with ``P(X >= beta S_T) >= alpha`` and price ``x0``.

    The constraint is met on the set of probability ``alpha`` where
    ``beta S_T Z_T`` is smallest; there the wealth is ``max(beta S_T, lam / Z_T)``
    and ``lam / Z_T`` elsewhere, with ``lam`` fixed by the budget.
    """
    check_positive("x0", x0)
    check_unit("beta", beta)
    check_unit("alpha", alpha)
    law = m.law()
    mu = float(m.drift[0]) if m.num_assets == 1 else None
    if mu is None:
        raise ValueError("the stock benchmark needs a one-stock market")
    s2 = float(m.volatility[0, 0]) ** 2
    if math.isclose(mu, s2, rel_tol=1e-12):
        raise ValueError("mu = sigma^2: beta S_T Z_T is constant, the band is undefined")
    merton = PiecewiseWealth.merton(x0)

    def done(w, lam, lam_a, band):
        bc, be = benchmark_payoff(m, beta) if beta > 0 else (0.0, 0.0)
        bench = [(1.0, PiecewiseWealth((Cell(0.0, INF, bc, be),)))] if beta > 0 else []
        prob = outperformance_probability(law, w, bench) if bench else 1.0
        return BenchmarkSolution(w, lam, lam_a, band, prob, abs(price(law, w) - x0))

    if beta == 0.0 or alpha == 0.0:
        return done(merton, x0, 0.0, None)
    b, es = benchmark_payoff(m, beta)
    k = 1.0 + es  # beta S_T Z_T = b Z^k
    # the cheapest alpha-set is a lower z-tail when k > 0, an upper tail when k < 0
    edge = law.quantile_closed(alpha if k > 0 else 1.0 - alpha)
    # alpha = 1 puts the edge at 0 or inf; the floor then binds everywhere
    lam_alpha = b * edge ** k if 0 < edge < INF else INF
    if x0 >= lam_alpha:
        return done(merton, x0, lam_alpha, None)

    def kappa(lam):
        return (lam / b) ** (1.0 / k)

    def band(lam):
        lo, hi = sorted((kappa(lam), edge))
        return ZInterval(lo, hi) if lo < hi else None

    def wealth(lam):
        bd = band(lam)
        e = -1.0
        cells = []
        if bd is None:
            return PiecewiseWealth.merton(lam)
        if bd.lo > 0:
            cells.append(Cell(0.0, bd.lo, lam, e))
        cells.append(Cell(bd.lo, bd.hi, b, es))
        if bd.hi < INF:
            cells.append(Cell(bd.hi, INF, lam, e))
        return PiecewiseWealth(tuple(cells))

    def gap(lam):
        return price(law, wealth(lam)) - x0

    floor_price = b * law.truncated_power_moment(
        k, ZInterval(0.0, edge) if k > 0 else ZInterval(edge, INF))
    if x0 <= floor_price:
        raise InfeasibleError(
            f"budget {x0} cannot fund beta*S_T on the cheapest alpha-set "
            f"(price {floor_price:.12g})")
    # price(lam) >= lam, so the root lies below x0
    hi = min(lam_alpha, x0)
    lo = hi * 1e-6
    while gap(lo) > 0:
        lo *= 1e-6
        if lo < 1e-300:
            raise InfeasibleError("benchmark budget root not bracketed")
    lam = brentq(gap, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    return done(wealth(lam), lam, lam_alpha, band(lam))


def relabel_back(result: EquilibriumResult2) -> tuple[PiecewiseWealth | None, PiecewiseWealth | None]:
    """Wealths in the caller's original agent order."""
    if result.game.relabeled:
        return result.wealth2, result.wealth1
    return result.wealth1, result.wealth2


def with_lambda2(result: EquilibriumResult2, lam2: float) -> EquilibriumResult2:
    """Copy of a free-set result whose off-set level is replaced (budget not rebalanced)."""
    if result.case_tag is not CaseTag.FAMILY_FREE_SET or result.free_set is None:
        raise ValueError("only free-set equilibria carry an off-set level")
    w2 = PiecewiseWealth.from_sets(lam2, [(result.free_set, result.game.beta1 * result.game.x01)])
    return replace(result, wealth2=w2, lambda2=lam2)
