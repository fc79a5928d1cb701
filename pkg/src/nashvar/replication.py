"""Replicating wealth and stock amounts for log-utility equilibrium payoffs.

Every log equilibrium wealth is a sum of digital band claims
``Z_T^{-1} 1{c1 < Z_T < c2}``. For such a claim the time-t value is
``P_t(c1 < Z_T < c2) / Z_t`` and the money held in the stocks follows by
differentiating in ``Z_t``; both are closed form in a Black-Scholes market.
The simulator draws Brownian paths, evaluates those closed forms and also
runs the discrete self-financing recursion with the same amounts.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from nashvar.market import INF, MarketParams, PiecewiseWealth
from nashvar.two_log import CaseTag, EquilibriumResult2

DEFAULT_CAP = 1e6


@dataclass(frozen=True)
class DigitalBand:
    c1: float
    c2: float = INF

    def __post_init__(self):
        if not (0.0 <= self.c1 < self.c2):
            raise ValueError(f"need 0 <= c1 < c2, got ({self.c1}, {self.c2})")


@dataclass(frozen=True)
class PathState:
    """Time, state price density and Brownian position on one path."""

    t: float
    z: float
    brownian: np.ndarray

    @classmethod
    def from_brownian(cls, m: MarketParams, t: float, w) -> "PathState":
        w = np.atleast_1d(np.asarray(w, dtype=float))
        theta = m.market_price_of_risk
        return cls(t, math.exp(-float(theta @ w) - 0.5 * float(theta @ theta) * t), w)

    def reconstruction_error(self, m: MarketParams) -> float:
        """Relative gap between ``z`` and ``exp(-theta W_t - |theta|^2 t / 2)``."""
        return abs(PathState.from_brownian(m, self.t, self.brownian).z / self.z - 1.0)


def _arg(c, log_z, theta, tau_left):
    """Standardised log-distance ``f(c, t)``; ``c`` may be 0 or inf."""
    with np.errstate(divide="ignore"):
        lc = np.log(c)
    return (lc - log_z + 0.5 * theta ** 2 * tau_left) / (theta * math.sqrt(tau_left))


def _pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * np.where(np.isfinite(x), x, 0.0) ** 2) / math.sqrt(2 * math.pi)
    return np.where(np.isfinite(x), out, 0.0)


def digital_value(c1, c2, t: float, z, m: MarketParams):
    """Per-unit wealth ``X(t)`` and the scalar ``s`` with amounts ``s (sigma sigma^T)^{-1} mu``.

    Vectorised over ``z``.
    """
    tau_left = m.horizon - t
    if not tau_left > 0:
        raise ValueError("closed forms need t < T; use the terminal payoff")
    theta = m.theta_norm
    z = np.asarray(z, dtype=float)
    lz = np.log(z)
    a2, a1 = _arg(c2, lz, theta, tau_left), _arg(c1, lz, theta, tau_left)
    # Phi(a2) - Phi(a1), via the complement when both sit in the upper tail
    mass = np.where(a1 > 0, ndtr(-a1) - ndtr(-a2), ndtr(a2) - ndtr(a1))
    x = mass / z
    s = x + (_pdf(a2) - _pdf(a1)) / (z * theta * math.sqrt(tau_left))
    return x, s


def digital_pair(band: DigitalBand, state: PathState, m: MarketParams):
    """Wealth and stock amounts replicating ``Z_T^{-1} 1{c1 < Z_T < c2}``."""
    x, s = digital_value(band.c1, band.c2, state.t, state.z, m)
    return float(x), float(s) * m.merton_direction


@dataclass(frozen=True)
class DigitalClaim:
    """Payoff ``sum_k coeff_k Z_T^{-1} 1{c1_k < Z_T < c2_k}``."""

    terms: tuple[tuple[float, DigitalBand], ...]

    @classmethod
    def from_wealth(cls, w: PiecewiseWealth) -> "DigitalClaim":
        if any(abs(c.exponent + 1.0) > 1e-12 for c in w.cells):
            raise ValueError("only payoffs of the form coeff / Z_T are replicated")
        return cls(tuple((c.coeff, DigitalBand(c.lo, c.hi)) for c in w.cells))

    def payoff(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        for coeff, b in self.terms:
            out = out + np.where((z > b.c1) & (z <= b.c2), coeff / z, 0.0)
        return out

    def value(self, t: float, z, m: MarketParams):
        """Wealth and amount scale ``s`` summed over the bands (vectorised)."""
        x_tot, s_tot = 0.0, 0.0
        for coeff, b in self.terms:
            x, s = digital_value(b.c1, b.c2, t, z, m)
            x_tot = x_tot + coeff * x
            s_tot = s_tot + coeff * s
        return x_tot, s_tot

    def pair(self, state: PathState, m: MarketParams):
        x, s = self.value(state.t, state.z, m)
        return float(x), float(s) * m.merton_direction


def equilibrium_claim(result: EquilibriumResult2, agent: int = 2) -> DigitalClaim:
    """Claim of one agent in a solved two-agent log equilibrium."""
    if not result.has_equilibrium:
        raise ValueError("no equilibrium to replicate")
    return DigitalClaim.from_wealth(result.wealth1 if agent == 1 else result.wealth2)


def equilibrium_pair(result: EquilibriumResult2, state: PathState, m: MarketParams):
    """Replicating pair of agent 2's free-set equilibrium wealth.

    The off-set level multiplies the two outer digitals and ``beta1 x01``
    the inner one.
    """
    if result.case_tag is not CaseTag.FAMILY_FREE_SET or result.free_set is None:
        raise ValueError("equilibrium_pair needs a free-set equilibrium with an interval A2")
    a2, g = result.free_set, result.game
    terms = [(g.beta1 * g.x01, DigitalBand(a2.lo, a2.hi))]
    if a2.lo > 0:
        terms.append((result.lambda2, DigitalBand(0.0, a2.lo)))
    if a2.hi < INF:
        terms.append((result.lambda2, DigitalBand(a2.hi, INF)))
    return DigitalClaim(tuple(terms)).pair(state, m)


@dataclass(frozen=True)
class StrategyPath:
    times: np.ndarray
    z: np.ndarray
    wealth: np.ndarray  # closed-form value
    self_financed: np.ndarray
    amounts: np.ndarray  # (steps + 1, d)
    capped: np.ndarray  # bool per time
    terminal_payoff_target: float


@dataclass(frozen=True)
class Simulation:
    """Paths stacked along axis 0."""

    times: np.ndarray
    z: np.ndarray
    wealth: np.ndarray
    self_financed: np.ndarray
    amounts: np.ndarray  # (n_paths, steps + 1, d)
    capped: np.ndarray
    payoff: np.ndarray
    seed: int

    def paths(self) -> list[StrategyPath]:
        return [StrategyPath(self.times, self.z[i], self.wealth[i], self.self_financed[i],
                             self.amounts[i], self.capped[i], float(self.payoff[i]))
                for i in range(self.z.shape[0])]

    def terminal_gap(self) -> np.ndarray:
        return np.abs(self.self_financed[:, -1] - self.payoff)


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream owned by one path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def _thread_cap() -> int:
    raw = os.environ.get("NASHVAR_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return min(8, os.cpu_count() or 1)


def _simulate_block(m, claim, times, idx, seed, cap):
    d = m.num_assets
    steps = times.size - 1
    dt = np.diff(times)
    dw = np.stack([path_rng(seed, int(i)).standard_normal((steps, d)) for i in idx])
    dw *= np.sqrt(dt)[None, :, None]
    w = np.concatenate((np.zeros((len(idx), 1, d)), np.cumsum(dw, axis=1)), axis=1)
    theta = m.market_price_of_risk
    z = np.exp(-(w @ theta) - 0.5 * float(theta @ theta) * times[None, :])
    direction = m.merton_direction
    sig = m.volatility
    drift = (m.drift - 0.5 * np.sum(sig ** 2, axis=1))
    growth = np.exp(drift[None, None, :] * dt[None, :, None] + dw @ sig.T) - 1.0

    n = len(idx)
    wealth = np.empty((n, steps + 1))
    scale = np.empty((n, steps + 1))
    for k in range(steps):
        wealth[:, k], scale[:, k] = claim.value(times[k], z[:, k], m)
    payoff = claim.payoff(z[:, -1])
    wealth[:, -1] = payoff
    scale[:, -1] = payoff
    amounts = scale[:, :, None] * direction[None, None, :]
    capped = np.any(np.abs(amounts) > cap, axis=2)
    amounts = np.clip(amounts, -cap, cap)
    sf = np.empty((n, steps + 1))
    sf[:, 0] = wealth[:, 0]
    gains = np.sum(amounts[:, :-1, :] * growth, axis=2)
    sf[:, 1:] = sf[:, :1] + np.cumsum(gains, axis=1)
    return z, wealth, sf, amounts, capped, payoff


def simulate(m: MarketParams, claim: DigitalClaim, steps: int, n_paths: int, seed: int,
             cap: float = DEFAULT_CAP, threads: int | None = None) -> Simulation:
    """Simulate ``n_paths`` paths on ``steps`` equal time steps.

    Path ``i`` draws its increments from its own stream seeded by
    ``(seed, i)``, so results do not depend on the thread count. Stock
    increments are exact lognormal ones. Amounts above ``cap`` in absolute
    value are clipped and flagged.
    """
    if steps < 2:
        raise ValueError("need at least 2 time steps")
    if n_paths < 1:
        raise ValueError("need at least one path")
    times = np.linspace(0.0, m.horizon, steps + 1)
    workers = min(threads or _thread_cap(), n_paths)
    blocks = np.array_split(np.arange(n_paths), workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(lambda b: _simulate_block(m, claim, times, b, seed, cap), blocks))
    z, wealth, sf, amounts, capped, payoff = (np.concatenate([p[k] for p in parts])
                                              for k in range(6))
    return Simulation(times, z, wealth, sf, amounts, capped, payoff, seed)


def simulate_paths(m: MarketParams, claim: DigitalClaim, steps: int, n_paths: int,
                   seed: int, cap: float = DEFAULT_CAP) -> list[StrategyPath]:
    return simulate(m, claim, steps, n_paths, seed, cap).paths()


PATH_HEADER = ("time", "Z_t", "closed_form_wealth", "self_financed_wealth")


def path_rows(path: StrategyPath) -> tuple[list[str], list[Sequence[float]]]:
    d = path.amounts.shape[1]
    header = list(PATH_HEADER) + [f"amount_asset_{j + 1}" for j in range(d)] + ["capped_flag"]
    rows = [[path.times[k], path.z[k], path.wealth[k], path.self_financed[k],
             *path.amounts[k], int(path.capped[k])] for k in range(path.times.size)]
    return header, rows
