"""Two agents with power utility ``U(x) = x**(1-gamma) / (1-gamma)``.

Agent 1 always holds the unconstrained optimum ``(x01/eps) Z**(-1/gamma)``.
Agent 2 matches ``beta1 X_1`` on the z-band where that is cheaper, the upper
tail ``{Z >= z_{1-alpha2}}`` for ``gamma < 1`` and the lower tail
``{Z <= z_{alpha2}}`` for ``gamma > 1``, and plays ``(lambda2 Z)**(-1/gamma)``
elsewhere.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from nashvar.market import (
    INF,
    LognormalLaw,
    PiecewiseWealth,
    ZInterval,
    outperformance_probability,
    price,
)
from nashvar.two_log import GameSpec2
from nashvar.utility import crra, inverse_marginal, marginal


class FeasibilityCase(str, enum.Enum):
    UNCONSTRAINED = "Unconstrained"
    CASE_A = "CaseA"
    CASE_B = "CaseB"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class PowerSolveReport:
    """Outcome of :func:`solve_power2`.

    ``split_quantile`` is the band edge ``z*``; ``band`` is the z-set on which
    agent 2 matches ``beta1 X_1``. ``eta2`` is the multiplier of the
    probability constraint in the pointwise Lagrangian.
    """

    feasibility_case: FeasibilityCase
    game: GameSpec2
    wealth1: PiecewiseWealth | None = None
    wealth2: PiecewiseWealth | None = None
    lambda2: float | None = None
    kappa: float | None = None
    eta2: float | None = None
    split_quantile: float | None = None
    band: ZInterval | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def constrained(self) -> bool:
        return self.feasibility_case in (FeasibilityCase.CASE_A, FeasibilityCase.CASE_B)


def split_quantile(law: LognormalLaw, alpha2: float, gamma: float) -> float:
    """Band edge: ``z_{1-alpha2}`` for ``gamma < 1``, ``z_{alpha2}`` for ``gamma > 1``."""
    return law.quantile_closed(1.0 - alpha2 if gamma < 1.0 else alpha2)


def constraint_band(law: LognormalLaw, alpha2: float, gamma: float) -> ZInterval | None:
    z = split_quantile(law, alpha2, gamma)
    if gamma < 1.0:
        return ZInterval(z, INF) if z < INF else None
    return ZInterval(0.0, z) if z > 0 else None


def band_bound(law: LognormalLaw, g: GameSpec2) -> float:
    """Right-hand side ``(beta1 x01 / eps) E[Z**(1-1/gamma) 1_band]`` of the case
    condition: the price of matching ``beta1 X_1`` on the band."""
    band = constraint_band(law, g.alpha2, g.gamma)
    if band is None:
        return 0.0
    q = 1.0 - 1.0 / g.gamma
    return g.beta1 * g.x01 / law.epsilon(g.gamma) * law.truncated_power_moment(q, band)


def eta_multiplier(lam2: float, kappa: float, beta1: float, gamma: float, z: float) -> float:
    """Jump in ``U(X) - lam2 z X`` between the two candidate maximisers at ``z``."""
    a = inverse_marginal(lam2 * z, gamma)
    b = beta1 * inverse_marginal(kappa * z, gamma)
    return float(crra(a, gamma) - crra(b, gamma) + lam2 * z * (b - a))


def solve_power2(g: GameSpec2, law: LognormalLaw) -> PowerSolveReport:
    """The unique equilibrium of the two-agent power game where it is known.

    Raises:
        ValueError: for ``gamma == 1`` (use :func:`nashvar.two_log.solve_log2`)
            or ``beta1 * beta2 >= 1``.
    """
    gam = g.gamma
    if gam == 1.0:
        raise ValueError("gamma = 1 is logarithmic utility; use solve_log2")
    if g.beta1 * g.beta2 >= 1.0:
        raise ValueError("the power game is solved only for beta1 * beta2 < 1")
    eps = law.epsilon(gam)
    x1, x2, b1 = g.x01, g.x02, g.beta1
    w1 = PiecewiseWealth.merton(x1 / eps, gam)
    kappa = float(marginal(x1 / eps, gam))
    diag = {"relabeled": g.relabeled, "epsilon": eps}

    if x1 >= g.beta2 * x2 >= g.beta1 * g.beta2 * x1 and x2 >= b1 * x1:
        w2 = PiecewiseWealth.merton(x2 / eps, gam)
        diag.update(_residuals(law, g, w1, w2))
        return PowerSolveReport(FeasibilityCase.UNCONSTRAINED, g, w1, w2, kappa=kappa,
                                diagnostics=diag)

    bound = band_bound(law, g)
    diag["band_price"] = bound
    case = FeasibilityCase.CASE_A if gam < 1.0 else FeasibilityCase.CASE_B
    # equality on the right leaves no budget off the band (lambda2 = inf)
    if not (b1 * x1 > x2 and x2 - bound > 1e-12 * x2):
        diag["violated"] = (
            f"need beta1*x01 > x02 > band price: beta1*x01={b1 * x1:.12g}, "
            f"x02={x2:.12g}, band price={bound:.12g}")
        return PowerSolveReport(FeasibilityCase.INFEASIBLE, g, kappa=kappa, diagnostics=diag)

    z_star = split_quantile(law, g.alpha2, gam)
    band = constraint_band(law, g.alpha2, gam)
    q = 1.0 - 1.0 / gam
    off = law.truncated_power_moment(q, _complement(band))
    lam2 = off ** gam * (x2 - bound) ** (-gam)
    w2 = _wealth2(lam2, b1 * x1 / eps, band, gam)
    eta2 = (eta_multiplier(lam2, kappa, b1, gam, z_star)
            if 0.0 < z_star < INF else 0.0)
    diag.update(_residuals(law, g, w1, w2))
    diag["lambda2_lower_bound"] = kappa * b1 ** (-gam)
    return PowerSolveReport(case, g, w1, w2, lambda2=lam2, kappa=kappa, eta2=eta2,
                            split_quantile=z_star, band=band, diagnostics=diag)


def _complement(band: ZInterval | None) -> ZInterval:
    if band is None:
        return ZInterval(0.0, INF)
    return ZInterval(0.0, band.lo) if band.lo > 0 else ZInterval(band.hi, INF)


def _wealth2(lam2, matched_coeff, band, gamma):
    base = lam2 ** (-1.0 / gamma)
    return PiecewiseWealth.from_sets(base, [(band, matched_coeff)] if band else [], gamma)


def _residuals(law, g, w1, w2):
    prob = outperformance_probability(law, w2, [(g.beta1, w1)])
    return {
        "budget_residual_1": abs(price(law, w1) - g.x01),
        "budget_residual_2": abs(price(law, w2) - g.x02),
        "constraint_probability_2": prob,
    }


def with_lambda2(r: PowerSolveReport, lam2: float) -> PowerSolveReport:
    """Copy with agent 2's off-band level replaced; ``eta2`` is kept as stored."""
    if not r.constrained:
        raise ValueError("only constrained reports carry lambda2")
    w2 = _wealth2(lam2, r.game.beta1 * r.wealth1.cells[0].coeff, r.band, r.game.gamma)
    return replace(r, lambda2=lam2, wealth2=w2)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    residual: float
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def verify_lagrangian(r: PowerSolveReport, law: LognormalLaw, g: GameSpec2 | None = None,
                      tol: float = 1e-9, n_grid: int = 1000) -> VerificationReport:
    """Check the pointwise Lagrangian argument behind a constrained power equilibrium.

    The split point is recomputed from ``law``, while ``lambda2`` and ``eta2``
    are taken from the report, so a tampered ``lambda2`` shows up as a
    nonzero jump at the split point.
    """
    g = g or r.game
    if not r.constrained:
        raise ValueError(f"nothing to verify for {r.feasibility_case.value}")
    gam, b1, lam2, kappa, eta2 = g.gamma, g.beta1, r.lambda2, r.kappa, r.eta2
    z_star = split_quantile(law, g.alpha2, gam)
    lam_lo = kappa * b1 ** (-gam)
    checks = []

    checks.append(Check("eta_nonnegative", eta2 >= -1e-12, max(0.0, -eta2)))

    def jump(z):
        # F(z): value of I(lam2 z) minus value of beta1 I(kappa z) plus the bonus
        a = inverse_marginal(lam2 * z, gam)
        b = b1 * inverse_marginal(kappa * z, gam)
        return crra(a, gam) - lam2 * z * a - (crra(b, gam) - lam2 * z * b + eta2)

    if 0.0 < z_star < INF:
        val = float(jump(z_star))
        scale = max(1.0, abs(float(crra(inverse_marginal(lam2 * z_star, gam), gam))))
        checks.append(Check("jump_at_split", abs(val) <= tol * scale, abs(val)))
    else:
        checks.append(Check("jump_at_split", True, 0.0, "empty or full band"))

    def f(lam):
        k = b1 * kappa ** (-1.0 / gam)
        return lam * (k - lam ** (-1.0 / gam)) + k / gam * (lam_lo - lam)

    res = abs(f(lam_lo))
    checks.append(Check("f_zero_at_threshold",
                        res <= tol * max(1.0, lam_lo * b1 * kappa ** (-1.0 / gam)), res))

    lams = lam_lo * np.geomspace(1.0 + 1e-6, 1e3, 200)
    fprime = (1.0 - 1.0 / gam) * (b1 * kappa ** (-1.0 / gam) - lams ** (-1.0 / gam))
    want = -1.0 if gam < 1.0 else 1.0
    bad = int(np.sum(np.sign(fprime) != want))
    checks.append(Check("f_prime_sign", bad == 0 and lam2 > lam_lo, float(bad),
                        f"lambda2={lam2:.12g} vs threshold {lam_lo:.12g}"))

    zs = np.exp(law.nu + law.tau * np.linspace(-6.0, 6.0, n_grid))
    floor = b1 * inverse_marginal(kappa * zs, gam)

    def lag(x, z):
        return crra(x, gam) - lam2 * z * x + eta2 * (x >= floor * (1 - 1e-14))

    x_star = r.wealth2(zs)
    l_star = lag(x_star, zs)
    gaps = np.maximum(lag(inverse_marginal(lam2 * zs, gam), zs) - l_star,
                      lag(floor, zs) - l_star)
    scale = np.maximum(1.0, np.abs(l_star))
    worst = float(np.max(gaps / scale))
    checks.append(Check("pointwise_argmax", worst <= tol, max(0.0, worst)))

    budget = abs(price(law, r.wealth2) - g.x02)
    checks.append(Check("budget", budget <= tol, budget))
    return VerificationReport(tuple(checks))
