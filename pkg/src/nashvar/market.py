"""Black-Scholes market, the lognormal law of the state price density and
closed-form pricing of piecewise power payoffs.

All terminal wealths in this package are functions of the state price
density ``Z_T`` only. They are stored as :class:`PiecewiseWealth`, a
partition of ``(0, inf)`` into z-intervals carrying ``coeff * z**exponent``.
Because ``ln Z_T`` is Gaussian, prices, probabilities and expected CRRA
utilities of such payoffs are available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from nashvar.utility import crra

INF = math.inf
REL_TOL = 1e-12


def _close(a: float, b: float, rel: float = REL_TOL) -> bool:
    return math.isclose(a, b, rel_tol=rel, abs_tol=0.0) or a == b


@dataclass(frozen=True)
class MarketParams:
    """Drift vector, volatility matrix and horizon of a zero-rate market.

    Args:
        drift: per-year drifts ``mu`` of the ``d`` stocks.
        volatility: regular ``d x d`` volatility matrix ``sigma``.
        horizon: investment horizon ``T`` in years.
    """

    drift: np.ndarray
    volatility: np.ndarray
    horizon: float

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.drift, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.volatility, dtype=float))
        if mu.ndim != 1:
            raise ValueError("drift must be a vector")
        if sigma.shape != (mu.size, mu.size):
            raise ValueError(
                f"volatility must be {mu.size}x{mu.size}, got {sigma.shape}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not np.all(np.isfinite(sigma)) or not np.all(np.isfinite(mu)):
            raise ValueError("market parameters must be finite")
        cond = np.linalg.cond(sigma)
        if not np.isfinite(cond) or cond > 1e12:
            raise ValueError("volatility matrix is singular")
        object.__setattr__(self, "drift", mu)
        object.__setattr__(self, "volatility", sigma)
        object.__setattr__(self, "horizon", float(self.horizon))

    @classmethod
    def one_stock(cls, mu: float, sigma: float, horizon: float) -> "MarketParams":
        return cls(np.array([mu]), np.array([[sigma]]), horizon)

    @property
    def num_assets(self) -> int:
        return self.drift.size

    @property
    def market_price_of_risk(self) -> np.ndarray:
        """``theta = sigma^{-1} mu``."""
        return np.linalg.solve(self.volatility, self.drift)

    @property
    def theta_norm(self) -> float:
        return float(np.linalg.norm(self.market_price_of_risk))

    @property
    def merton_direction(self) -> np.ndarray:
        """``(sigma sigma^T)^{-1} mu``: stock amounts per unit of ``1/Z_t``."""
        s = self.volatility
        return np.linalg.solve(s @ s.T, self.drift)

    def law(self) -> "LognormalLaw":
        return law_from_market(self)

    def stock_exponent(self) -> tuple[float, float]:
        """Return ``(a, e)`` with ``S_T = a * Z_T**e`` for a one-stock market.

        With ``ln Z_T = -theta W_T - theta^2 T / 2`` the stock satisfies
        ``ln S_T = (mu - sigma^2) T / 2 - (sigma^2 / mu) ln Z_T``.
        """
        if self.num_assets != 1:
            raise ValueError("stock_exponent needs a one-stock market")
        mu = float(self.drift[0])
        s2 = float(self.volatility[0, 0]) ** 2
        if mu == 0.0:
            raise ValueError("zero drift: S_T is not a function of Z_T")
        return math.exp((mu - s2) * self.horizon / 2.0), -s2 / mu


def law_from_market(m: MarketParams) -> "LognormalLaw":
    """Lognormal law of ``Z_T``: ``nu = -|theta|^2 T / 2``, ``tau^2 = |theta|^2 T``."""
    theta2 = float(np.sum(m.market_price_of_risk ** 2))
    if not np.isfinite(theta2):
        raise ValueError("market price of risk is not finite")
    if theta2 == 0.0:
        raise ValueError(
            "zero market price of risk: Z_T is degenerate (a.s. 1) and "
            "probability constraints cannot be located")
    return LognormalLaw(nu=-0.5 * theta2 * m.horizon,
                        tau=math.sqrt(theta2 * m.horizon))


@dataclass(frozen=True)
class ZInterval:
    """The z-set ``{lo < Z_T <= hi}``; ``hi`` may be ``math.inf``."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval bounds must not be NaN")
        if lo < 0 or not math.isfinite(lo):
            raise ValueError(f"lower bound must be finite and >= 0, got {lo}")
        if not lo < hi:
            raise ValueError(f"empty interval ({lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def unbounded(self) -> bool:
        return self.hi == INF

    def contains(self, z: float) -> bool:
        return self.lo < z <= self.hi

    def intersect(self, other: "ZInterval") -> "ZInterval | None":
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return ZInterval(lo, hi) if lo < hi else None


FULL_LINE = ZInterval(0.0, INF)


def _gauss_mass(a: float, b: float) -> float:
    """``Phi(b) - Phi(a)``; the upper tail goes through the complement."""
    if a > 0:
        return float(ndtr(-a) - ndtr(-b))
    return float(ndtr(b) - ndtr(a))


@dataclass(frozen=True)
class LognormalLaw:
    """``Z_T ~ LN(nu, tau^2)`` with quantile and truncated-moment machinery."""

    nu: float
    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.nu) and math.isfinite(self.tau)):
            raise ValueError("lognormal parameters must be finite")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    def _std(self, c: float, shift: float = 0.0) -> float:
        if c <= 0:
            return -INF
        if c == INF:
            return INF
        return (math.log(c) - self.nu - shift) / self.tau

    def cdf(self, z):
        """``P(Z_T <= z)``; vectorised."""
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            out = ndtr((np.log(np.where(z > 0, z, 1.0)) - self.nu) / self.tau)
        out = np.where(z > 0, out, 0.0)
        return out if out.ndim else float(out)

    def quantile(self, p: float) -> float:
        """The ``p``-quantile ``exp(nu + tau * Phi^{-1}(p))``, ``0 < p < 1``."""
        if not 0.0 < p < 1.0:
            raise ValueError(f"quantile needs 0 < p < 1, got {p}")
        return math.exp(self.nu + self.tau * float(ndtri(p)))

    def quantile_closed(self, p: float) -> float:
        """Quantile extended to ``p in [0, 1]`` by its limits ``0`` and ``inf``."""
        if p <= 0.0:
            if p < 0.0:
                raise ValueError(f"probability {p} < 0")
            return 0.0
        if p >= 1.0:
            if p > 1.0:
                raise ValueError(f"probability {p} > 1")
            return INF
        return self.quantile(p)

    def probability(self, interval: ZInterval) -> float:
        return _gauss_mass(self._std(interval.lo), self._std(interval.hi))

    def power_moment(self, q: float) -> float:
        """``E[Z_T**q] = exp(q nu + q^2 tau^2 / 2)``."""
        return math.exp(q * self.nu + 0.5 * q * q * self.tau ** 2)

    def truncated_power_moment(self, q: float, interval: ZInterval = FULL_LINE) -> float:
        """``E[Z_T**q 1{lo < Z_T < hi}]`` in closed form."""
        shift = q * self.tau ** 2
        hi, lo = self._std(interval.hi, shift), self._std(interval.lo, shift)
        return self.power_moment(q) * _gauss_mass(lo, hi)

    def truncated_log_moment(self, interval: ZInterval = FULL_LINE) -> float:
        """``E[ln Z_T 1{lo < Z_T < hi}]``."""
        a, b = self._std(interval.lo), self._std(interval.hi)
        pdf = lambda x: 0.0 if math.isinf(x) else math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        return (self.nu * float(ndtr(b) - ndtr(a))
                - self.tau * (pdf(b) - pdf(a)))

    def epsilon(self, gamma: float) -> float:
        """``eps_gamma = E[Z_T**(1 - 1/gamma)]``."""
        return self.power_moment(1.0 - 1.0 / gamma)

    def conditional_mean(self, interval: ZInterval) -> float:
        return self.truncated_power_moment(1.0, interval) / self.probability(interval)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return np.exp(self.nu + self.tau * rng.standard_normal(size))


def interval_upper_bound(law: LognormalLaw, c1: float, alpha: float) -> float:
    """Upper end ``c2`` with ``P(c1 < Z_T < c2) = alpha``.

    Raises:
        ValueError: if ``P(Z_T > c1) < alpha``; the message names the largest
            feasible probability.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if c1 < 0:
        raise ValueError(f"c1 must be >= 0, got {c1}")
    base = float(law.cdf(c1))
    target = alpha + base
    if target > 1.0 + 1e-15:
        raise ValueError(
            f"no interval above c1={c1} has probability {alpha}; "
            f"the maximal feasible alpha is {1.0 - base:.17g}")
    if target >= 1.0:
        return INF
    if alpha == 0.0:
        return c1
    return max(c1, math.exp(law.nu + law.tau * float(ndtri(target))))


@dataclass(frozen=True)
class Cell:
    lo: float
    hi: float
    coeff: float
    exponent: float

    @property
    def interval(self) -> ZInterval:
        return ZInterval(self.lo, self.hi)

    def __call__(self, z):
        return self.coeff * np.power(z, self.exponent)


@dataclass(frozen=True)
class PiecewiseWealth:
    """Terminal wealth ``coeff_k * Z_T**exponent_k`` on the k-th z-cell.

    Cells are half-open ``(lo, hi]``, partition ``(0, inf)`` and are kept in
    canonical form (adjacent cells with equal coefficient and exponent are
    merged).
    """

    cells: tuple[Cell, ...]
    gamma: float = 1.0
    _his: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cells = tuple(c if isinstance(c, Cell) else Cell(*c) for c in self.cells)
        if not cells:
            raise ValueError("a wealth needs at least one cell")
        if cells[0].lo != 0.0:
            raise ValueError("first cell must start at z = 0")
        if cells[-1].hi != INF:
            raise ValueError("last cell must end at z = inf")
        for a, b in zip(cells, cells[1:]):
            if a.hi != b.lo:
                raise ValueError(f"cells do not abut: {a.hi} != {b.lo}")
        for c in cells:
            if not c.lo < c.hi:
                raise ValueError(f"empty cell ({c.lo}, {c.hi}]")
            if not (c.coeff > 0 and math.isfinite(c.coeff)):
                raise ValueError(f"cell coefficient must be positive, got {c.coeff}")
            if not math.isfinite(c.exponent):
                raise ValueError("cell exponent must be finite")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "cells", _merge(cells))
        object.__setattr__(self, "_his", np.array([c.hi for c in self.cells]))

    @classmethod
    def merton(cls, coeff: float, gamma: float = 1.0) -> "PiecewiseWealth":
        """Single-cell wealth ``coeff * Z_T**(-1/gamma)``."""
        return cls((Cell(0.0, INF, coeff, -1.0 / gamma),), gamma)

    @classmethod
    def from_sets(cls, base: float, overrides: Sequence[tuple[ZInterval, float]],
                  gamma: float = 1.0) -> "PiecewiseWealth":
        """``base * Z**(-1/gamma)`` except on disjoint intervals with their own coefficient."""
        e = -1.0 / gamma
        cells, z = [], 0.0
        for iv, coeff in sorted(overrides, key=lambda o: o[0].lo):
            if iv.lo < z:
                raise ValueError("override intervals overlap")
            if iv.lo > z:
                cells.append(Cell(z, iv.lo, base, e))
            cells.append(Cell(iv.lo, iv.hi, coeff, e))
            z = iv.hi
        if z < INF:
            cells.append(Cell(z, INF, base, e))
        return cls(tuple(cells), gamma)

    @property
    def breakpoints(self) -> list[float]:
        return [c.hi for c in self.cells[:-1]]

    def cell_at(self, z: float) -> Cell:
        if not z > 0:
            raise ValueError("wealth is defined for z > 0")
        return self.cells[int(np.searchsorted(self._his, z, side="left"))]

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise ValueError("wealth is defined for z > 0")
        idx = np.searchsorted(self._his, z, side="left")
        coeff = np.array([c.coeff for c in self.cells])[idx]
        expo = np.array([c.exponent for c in self.cells])[idx]
        out = coeff * np.power(z, expo)
        return out if out.ndim else float(out)

    def pieces(self, interval: ZInterval) -> Iterable[tuple[ZInterval, Cell]]:
        """Cells clipped to ``interval``."""
        for c in self.cells:
            part = c.interval.intersect(interval)
            if part is not None:
                yield part, c

    def scaled(self, factor: float) -> "PiecewiseWealth":
        return PiecewiseWealth(
            tuple(Cell(c.lo, c.hi, c.coeff * factor, c.exponent) for c in self.cells),
            self.gamma)

    def to_rows(self) -> list[tuple[float, float, float, float]]:
        return [(c.lo, c.hi, c.coeff, c.exponent) for c in self.cells]

    @classmethod
    def from_rows(cls, rows, gamma: float = 1.0) -> "PiecewiseWealth":
        return cls(tuple(Cell(*map(float, r)) for r in rows), gamma)


def _merge(cells: tuple[Cell, ...]) -> tuple[Cell, ...]:
    out = [cells[0]]
    for c in cells[1:]:
        last = out[-1]
        if _close(last.coeff, c.coeff) and _close(last.exponent, c.exponent):
            out[-1] = Cell(last.lo, c.hi, last.coeff, last.exponent)
        else:
            out.append(c)
    return tuple(out)


def common_breakpoints(*wealths: PiecewiseWealth) -> list[float]:
    pts = sorted({b for w in wealths for b in w.breakpoints})
    return pts


def price(law: LognormalLaw, w: PiecewiseWealth, interval: ZInterval = FULL_LINE) -> float:
    """Time-0 price ``E[Z_T X 1{X's cell in interval}]``."""
    return sum(c.coeff * law.truncated_power_moment(1.0 + c.exponent, part)
               for part, c in w.pieces(interval))


def expected_utility(law: LognormalLaw, w: PiecewiseWealth, gamma: float = 1.0) -> float:
    """``E U(X)`` for CRRA ``U``; ``gamma == 1`` is logarithmic utility."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    total = 0.0
    for c in w.cells:
        if c.coeff <= 0:
            raise ValueError("utility needs positive wealth")
        iv = c.interval
        if gamma == 1.0:
            total += (math.log(c.coeff) * law.probability(iv)
                      + c.exponent * law.truncated_log_moment(iv))
        else:
            total += (crra(c.coeff, gamma)
                      * law.truncated_power_moment(c.exponent * (1.0 - gamma), iv))
    return total


def outperformance_probability(law: LognormalLaw, own: PiecewiseWealth,
                               benchmark: Sequence[tuple[float, PiecewiseWealth]],
                               rel_tol: float = 1e-12) -> float:
    """``P(own >= sum_j w_j X_j)`` computed exactly on the common partition.

    On each common cell the difference is a sum of monomials. One or two
    distinct exponents are handled in closed form, which covers every payoff
    built in this package.
    """
    wealths = [own] + [w for _, w in benchmark]
    edges = [0.0] + common_breakpoints(*wealths) + [INF]
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        iv = ZInterval(lo, hi)
        probe = lo * 2.0 + 1.0 if hi == INF else (0.5 * (lo + hi) if lo > 0 else 0.5 * hi)
        terms: dict[float, float] = {}
        scale = 0.0
        for sign_w, w in [(1.0, own)] + [(-wt, x) for wt, x in benchmark]:
            if sign_w == 0.0:
                continue
            c = w.cell_at(probe)
            key = next((k for k in terms if _close(k, c.exponent)), c.exponent)
            terms[key] = terms.get(key, 0.0) + sign_w * c.coeff
            scale = max(scale, abs(sign_w * c.coeff))
        total += _satisfied_mass(law, iv, terms, scale * rel_tol)
    return total


def _satisfied_mass(law: LognormalLaw, iv: ZInterval, terms: dict[float, float],
                    tol: float) -> float:
    nonzero = {e: a for e, a in terms.items() if abs(a) > tol}
    if not nonzero:
        return law.probability(iv)
    if len(nonzero) == 1:
        (a,) = nonzero.values()
        return law.probability(iv) if a > 0 else 0.0
    if len(nonzero) > 2:
        raise NotImplementedError("comparison of more than two distinct powers of z")
    (e1, a1), (e2, a2) = nonzero.items()
    # a1 z^e1 + a2 z^e2 >= 0  <=>  h(z) = a1 z^d + a2 >= 0 with d = e1 - e2
    d = e1 - e2
    ratio = -a2 / a1
    if ratio <= 0:
        return law.probability(iv) if a1 > 0 else 0.0
    z0 = ratio ** (1.0 / d)
    increasing = a1 * d > 0
    part = ZInterval(0.0, INF).intersect(
        ZInterval(z0, INF) if increasing else ZInterval(0.0, z0))
    part = part.intersect(iv) if part is not None else None
    return law.probability(part) if part is not None else 0.0
