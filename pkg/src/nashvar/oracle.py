"""Discretised best responses used to certify equilibria.

The z-axis is cut into cells of equal probability, refined by any
breakpoints of the wealths involved. Wealths are constant on cells; a cell
is priced through its conditional mean ``zbar_k = E[Z | cell]``, so a
continuous payoff is carried to the grid without changing its price:
``X_k = E[Z X 1_k] / (p_k zbar_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from nashvar.errors import InfeasibleError
from nashvar.market import INF, LognormalLaw, PiecewiseWealth, ZInterval, expected_utility, price
from nashvar.utility import certainty_equivalent, crra


@dataclass(frozen=True)
class Grid:
    edges: np.ndarray  # m + 1 increasing edges, edges[0] = 0, edges[-1] = inf
    mass: np.ndarray
    zbar: np.ndarray

    @property
    def m(self) -> int:
        return self.mass.size

    def intervals(self) -> list[ZInterval]:
        return [ZInterval(a, b) for a, b in zip(self.edges[:-1], self.edges[1:])]

    def project(self, law: LognormalLaw, w: PiecewiseWealth) -> np.ndarray:
        """Cell values of ``w`` that keep its price on every cell."""
        return np.array([price(law, w, iv) for iv in self.intervals()]) / (self.mass * self.zbar)

    def price(self, x: np.ndarray) -> float:
        return float(np.sum(self.mass * self.zbar * x))

    def utility(self, x: np.ndarray, gamma: float) -> float:
        return float(np.sum(self.mass * crra(x, gamma)))


def make_grid(law: LognormalLaw, m: int, breakpoints: Sequence[float] = ()) -> Grid:
    """``m`` equal-probability cells, split further at ``breakpoints``."""
    if m < 1:
        raise ValueError("a grid needs at least one cell")
    inner = [law.quantile(k / m) for k in range(1, m)]
    extra = [b for b in breakpoints if 0.0 < b < INF]
    pts = np.unique(np.array(inner + extra, dtype=float))
    if pts.size:
        # drop edges that coincide with a quantile up to rounding
        keep = np.concatenate(([True], np.diff(pts) > 1e-13 * pts[1:]))
        pts = pts[keep]
    edges = np.concatenate(([0.0], pts, [INF]))
    ivs = [ZInterval(a, b) for a, b in zip(edges[:-1], edges[1:])]
    mass = np.array([law.probability(iv) for iv in ivs])
    first = np.array([law.truncated_power_moment(1.0, iv) for iv in ivs])
    return Grid(edges, mass, first / mass)


@dataclass(frozen=True)
class GridProblem:
    """One agent's discretised problem: beat ``threshold`` on mass ``alpha``.

    Attributes:
        grid: the cell partition.
        threshold: cell values ``Y_k >= 0`` of the opponents' weighted wealth.
        alpha: required probability of ``X >= Y``.
        budget: initial capital.
        gamma: CRRA parameter, 1 for log utility.
    """

    grid: Grid
    threshold: np.ndarray
    alpha: float
    budget: float
    gamma: float = 1.0

    def __post_init__(self):
        if abs(float(np.sum(self.grid.mass)) - 1.0) > 1e-12:
            raise ValueError("cell masses must sum to one")
        y = np.asarray(self.threshold, dtype=float)
        if y.shape != self.grid.mass.shape or not np.all(np.isfinite(y)) or np.any(y < 0):
            raise ValueError("thresholds must be finite, nonnegative and one per cell")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        object.__setattr__(self, "threshold", y)


@dataclass(frozen=True)
class GridSolution:
    values: np.ndarray
    selected: np.ndarray  # cells whose floor is imposed
    level: float  # lambda for log utility, the coefficient c of c z^(-1/gamma) otherwise
    utility: float


def agent_problem(law: LognormalLaw, m: int, budget: float, alpha: float,
                  opponents: Sequence[tuple[float, PiecewiseWealth]], gamma: float = 1.0,
                  extra: Sequence[PiecewiseWealth] = ()) -> GridProblem:
    """Grid problem against ``sum_j w_j X_j``, with all breakpoints kept as edges."""
    breaks = [b for _, w in opponents for b in w.breakpoints]
    breaks += [b for w in extra for b in w.breakpoints]
    grid = make_grid(law, m, breaks)
    y = np.zeros(grid.m)
    for wt, w in opponents:
        if wt:
            y += wt * grid.project(law, w)
    return GridProblem(grid, y, alpha, budget, gamma)


def _floor_solve(p: GridProblem, selected: np.ndarray) -> GridSolution:
    """Maximise grid utility with ``X_k >= Y_k`` on ``selected`` and the budget.

    The optimum is ``max(f_k, c zbar_k**(-1/gamma))``; its price is
    piecewise linear in ``c`` and is inverted exactly.
    """
    g, gam = p.grid, p.gamma
    floor = np.where(selected, p.threshold, 0.0)
    floor_price = g.price(floor)
    if not p.budget > floor_price * (1.0 + 1e-14):
        raise InfeasibleError(
            f"budget {p.budget:.12g} does not exceed the floor price {floor_price:.12g}")
    shape = g.zbar ** (-1.0 / gam)
    brk = floor / shape  # c above which cell k leaves its floor
    order = np.argsort(brk, kind="stable")
    bs = brk[order]
    slope = (g.mass * g.zbar * shape)[order]
    fixed = (g.mass * g.zbar * floor)[order]
    pre = np.concatenate(([0.0], np.cumsum(slope)))
    suf = np.concatenate((np.cumsum(fixed[::-1])[::-1], [0.0]))
    # with the j smallest breaks below c <= the next one: price = c pre[j] + suf[j]
    j = np.arange(1, g.m + 1)
    cand = (p.budget - suf[j]) / pre[j]
    lower = bs
    upper = np.concatenate((bs[1:], [INF]))
    ok = (cand > lower) & (cand <= upper * (1 + 1e-15))
    c = float(cand[np.argmax(ok)]) if ok.any() else float(cand[-1])
    x = np.maximum(floor, c * shape)
    return GridSolution(x, np.asarray(selected, bool), c, g.utility(x, gam))


def solve_floor(p: GridProblem) -> GridSolution:
    """Best response when the floor must hold on every cell (``alpha = 1``)."""
    if p.alpha != 1.0:
        raise ValueError("solve_floor needs alpha = 1; use solve_partial")
    return _floor_solve(p, np.ones(p.grid.m, bool))


def cheapest_cells(p: GridProblem) -> np.ndarray:
    """Cells of least ``Y_k zbar_k`` with total mass at least ``alpha``.

    Values equal to 10 significant digits tie and go to the lower index.
    """
    ytil = p.threshold * p.grid.zbar
    scale = float(np.max(ytil)) or 1.0
    key = np.round(ytil / scale, 10)
    order = np.lexsort((np.arange(p.grid.m), key))
    cum = np.cumsum(p.grid.mass[order])
    need = int(np.searchsorted(cum, p.alpha * (1.0 - 1e-12) - 1e-15)) + 1 if p.alpha > 0 else 0
    sel = np.zeros(p.grid.m, bool)
    sel[order[:min(need, p.grid.m)]] = True
    return sel


def solve_partial(p: GridProblem) -> GridSolution:
    """Log-utility best response beating ``Y`` on probability ``alpha``.

    The constraint is placed on the cells where ``Y Z`` is smallest; there the
    wealth is ``max(Y, lambda / z)`` and ``lambda / z`` elsewhere.
    """
    if p.gamma != 1.0:
        raise ValueError("solve_partial is stated for log utility; use best_response")
    return _floor_solve(p, cheapest_cells(p))


def _side_cells(p: GridProblem, upper: bool) -> np.ndarray:
    mass = p.grid.mass[::-1] if upper else p.grid.mass
    cum = np.cumsum(mass)
    need = int(np.searchsorted(cum, p.alpha * (1.0 - 1e-12) - 1e-15)) + 1 if p.alpha > 0 else 0
    sel = np.zeros(p.grid.m, bool)
    idx = np.arange(min(need, p.grid.m))
    sel[(p.grid.m - 1 - idx) if upper else idx] = True
    return sel


def _satisfied_mass(p: GridProblem, x: np.ndarray) -> float:
    ok = x >= p.threshold * (1.0 - 1e-12)
    return float(np.sum(p.grid.mass[ok]))


def best_response(p: GridProblem) -> GridSolution:
    """Grid best response.

    Log utility uses :func:`solve_partial`. Power utility compares the
    unconstrained optimum (if it already satisfies the constraint) with the
    floor placed on a lower and on an upper z-band.
    """
    if p.gamma == 1.0:
        return solve_partial(p)
    free = _floor_solve(p, np.zeros(p.grid.m, bool))
    if _satisfied_mass(p, free.values) >= p.alpha * (1.0 - 1e-12):
        return free
    options = []
    for upper in (False, True):
        try:
            options.append(_floor_solve(p, _side_cells(p, upper)))
        except InfeasibleError:
            pass
    if not options:
        raise InfeasibleError("neither band side can fund the floor")
    return max(options, key=lambda s: s.utility)


def deviation_search(p: GridProblem, candidate: np.ndarray,
                     certainty_equivalent_units: bool | None = None) -> float:
    """Gain of the grid best response over ``candidate``; 0 certifies it.

    Gains are in expected-utility units for log utility and in
    certainty-equivalent wealth for power utility unless overridden.

    Raises:
        InfeasibleError: if ``candidate`` breaks the budget or the constraint.
    """
    x = np.asarray(candidate, dtype=float)
    g = p.grid
    if x.shape != g.mass.shape or np.any(~(x > 0)):
        raise InfeasibleError("candidate must be positive on every cell")
    cost = g.price(x)
    if cost > p.budget * (1.0 + 1e-10):
        raise InfeasibleError(f"candidate costs {cost:.12g} > budget {p.budget:.12g}")
    mass = _satisfied_mass(p, x)
    if mass < p.alpha - 1e-10:
        raise InfeasibleError(
            f"candidate beats the threshold with probability {mass:.12g} < alpha {p.alpha}")
    best = best_response(p)
    own = g.utility(x, p.gamma)
    ce = (p.gamma != 1.0) if certainty_equivalent_units is None else certainty_equivalent_units
    if ce:
        gain = certainty_equivalent(best.utility, p.gamma) - certainty_equivalent(own, p.gamma)
    else:
        gain = best.utility - own
    return max(0.0, gain)


def equal_mass_error(law: LognormalLaw, w: PiecewiseWealth, m: int, gamma: float = 1.0) -> float:
    """``|grid utility - exact utility|`` of ``w`` projected on an ``m``-cell grid."""
    grid = make_grid(law, m, w.breakpoints)
    return abs(grid.utility(grid.project(law, w), gamma) - expected_utility(law, w, gamma))


def lambda_alpha(p: GridProblem) -> float:
    """``inf{lam : P(Y <= lam / Z) >= alpha}`` on the grid.

    Budgets at or above this level meet the constraint with the unconstrained
    log wealth.
    """
    if p.alpha == 0.0:
        return 0.0
    ytil = p.threshold * p.grid.zbar
    order = np.argsort(ytil, kind="stable")
    cum = np.cumsum(p.grid.mass[order])
    k = int(np.searchsorted(cum, p.alpha * (1.0 - 1e-12)))
    return float(ytil[order[min(k, p.grid.m - 1)]])


__all__ = [
    "Grid", "GridProblem", "GridSolution", "make_grid", "agent_problem", "solve_floor",
    "solve_partial", "best_response", "deviation_search", "cheapest_cells",
    "equal_mass_error", "lambda_alpha",
]

