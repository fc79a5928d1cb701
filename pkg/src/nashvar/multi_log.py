"""Games of ``n >= 3`` agents with logarithmic utility.

Agent ``i`` must beat ``sum_j beta_ij X_j`` with probability ``alpha_i``.
When ``sum alpha_i <= 1`` the constraint sets can be chosen disjoint and the
equilibrium is fixed by one level ``lambda_i`` per agent. Otherwise the
z-axis is cut into ``m`` cells of probability ``1/m`` and each agent picks
``ell_i = alpha_i m`` cells; those equilibria are found by best-response
dynamics.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from nashvar.errors import ConvergenceError, InfeasibleError, NoEquilibriumError
from nashvar.market import (
    INF,
    LognormalLaw,
    PiecewiseWealth,
    ZInterval,
    outperformance_probability,
    price,
)
from nashvar.oracle import agent_problem, deviation_search


@dataclass(frozen=True)
class GameSpecN:
    """Capitals, constraint probabilities and weight matrix of an n-agent game.

    Agents are reordered by decreasing capital; ``order[k]`` is the caller's
    index of the k-th agent here. A scalar ``beta`` fills the off-diagonal.
    """

    x0: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    order: np.ndarray = field(default=None)

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        n = x0.size
        if x0.ndim != 1 or n < 3:
            raise ValueError("an n-agent game needs a vector of at least 3 capitals")
        if not np.all(np.isfinite(x0)) or np.any(x0 <= 0):
            raise ValueError("initial capitals must be positive")
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), (n,)).copy()
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise ValueError("alpha entries must lie in [0, 1]")
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim == 0:
            beta = np.full((n, n), float(beta))
            np.fill_diagonal(beta, 0.0)
        if beta.shape != (n, n):
            raise ValueError(f"beta must be {n}x{n}")
        if np.any(np.diag(beta) != 0):
            raise ValueError("beta must have a zero diagonal")
        if np.any(beta < 0) or np.any(beta > 1):
            raise ValueError("beta entries must lie in [0, 1]")
        if np.any(beta.sum(axis=1) > 1.0 + 1e-12):
            raise ValueError("each row of beta must sum to at most 1")
        if self.order is None:
            order = np.argsort(-x0, kind="stable")
            x0, alpha, beta = x0[order], alpha[order], beta[np.ix_(order, order)]
        else:
            order = np.asarray(self.order)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "order", order)

    @property
    def n(self) -> int:
        return self.x0.size

    def to_caller(self, values: Sequence) -> list:
        """Reorder per-agent values back to the caller's agent order."""
        out = [None] * self.n
        for k, i in enumerate(self.order):
            out[int(i)] = values[k]
        return out


@dataclass(frozen=True)
class DisjointEquilibrium:
    lambdas: np.ndarray
    sets: tuple[ZInterval | None, ...]
    wealths: tuple[PiecewiseWealth, ...]
    iterations: int
    residual: float
    benchmark_levels: np.ndarray  # sum_j beta_ij lambda_j
    diagnostics: dict = field(default_factory=dict)


def _lam_map(x0, alpha, beta, lam, i):
    lb = float(beta[i] @ lam)
    return (x0[i] - alpha[i] * max(x0[i], lb)) / (1.0 - alpha[i])


def lambda_residual(g: GameSpecN, lam: np.ndarray) -> float:
    """Largest violation of the fixed-point equations for ``lam``."""
    return max(abs(lam[i] - _lam_map(g.x0, g.alpha, g.beta, lam, i)) for i in range(g.n))


def disjoint_levels(g: GameSpecN, max_rounds: int = 10_000, tol: float = 1e-15):
    """Gauss-Seidel sweeps for the levels, damped by 1/2 once the step grows."""
    if np.any(g.alpha >= 1.0):
        raise ValueError("disjoint equilibria need every alpha < 1")
    lam = g.x0.copy()
    damp, prev_step = 1.0, INF
    for it in range(1, max_rounds + 1):
        step = 0.0
        for i in range(g.n):
            new = _lam_map(g.x0, g.alpha, g.beta, lam, i)
            new = lam[i] + damp * (new - lam[i])
            step = max(step, abs(new - lam[i]))
            lam[i] = new
        if step <= tol * float(np.max(g.x0)):
            return lam, it
        if step > prev_step:
            damp = 0.5
        prev_step = step
    raise ConvergenceError(f"level iteration did not settle in {max_rounds} rounds")


def consecutive_sets(law: LognormalLaw, alpha: np.ndarray) -> tuple[ZInterval | None, ...]:
    """``A_i = (z_{a_1+...+a_{i-1}}, z_{a_1+...+a_i}]``; empty when ``alpha_i = 0``."""
    cum = np.concatenate(([0.0], np.cumsum(alpha)))
    out = []
    for i, a in enumerate(alpha):
        if a == 0.0:
            out.append(None)
            continue
        lo = law.quantile_closed(float(cum[i]))
        hi = law.quantile_closed(min(1.0, float(cum[i + 1])))
        out.append(ZInterval(lo, hi))
    return tuple(out)


def solve_disjoint(g: GameSpecN, law: LognormalLaw,
                   sets: Sequence[ZInterval | None] | None = None) -> DisjointEquilibrium:
    """Equilibrium with pairwise disjoint constraint sets.

    Raises:
        NoEquilibriumError: if a level is not positive or an agent cannot
            afford its benchmark on its set.
        ConvergenceError: if the level iteration does not settle.
    """
    if float(np.sum(g.alpha)) > 1.0 + 1e-12:
        raise ValueError("disjoint sets need sum(alpha) <= 1; use solve_partition")
    lam, iters = disjoint_levels(g)
    lb = g.beta @ lam
    bad = [i for i in range(g.n) if not (lam[i] > 0 and g.alpha[i] * lb[i] <= g.x0[i] * (1 + 1e-12))]
    if bad:
        raise NoEquilibriumError(
            "levels violate 0 < lambda_i and alpha_i * benchmark_i <= x0_i for agents "
            + ", ".join(str(int(g.order[i]) + 1) for i in bad))
    if sets is None:
        sets = consecutive_sets(law, g.alpha)
    else:
        sets = _check_sets(law, g, sets)
    wealths = []
    for i in range(g.n):
        over = [(sets[i], max(g.x0[i], lb[i]))] if sets[i] is not None else []
        wealths.append(PiecewiseWealth.from_sets(lam[i], over))
    return DisjointEquilibrium(lam, tuple(sets), tuple(wealths), iters,
                               lambda_residual(g, lam), lb)


def _check_sets(law, g, sets):
    sets = tuple(sets)
    if len(sets) != g.n:
        raise ValueError(f"need {g.n} sets, got {len(sets)}")
    for i, s in enumerate(sets):
        want = g.alpha[i]
        got = 0.0 if s is None else law.probability(s)
        if abs(got - want) > 1e-10:
            raise ValueError(f"set {i + 1} has probability {got:.12g}, need {want}")
    live = sorted((s for s in sets if s is not None), key=lambda s: s.lo)
    for a, b in zip(live, live[1:]):
        if a.hi > b.lo:
            raise ValueError("constraint sets must be pairwise disjoint")
    return sets


def perturbed_disjoint(eq: DisjointEquilibrium, g: GameSpecN, agent: int,
                       factor: float) -> DisjointEquilibrium:
    """Scale one agent's off-set level, rebalancing its on-set level to the budget."""
    s = eq.sets[agent]
    if s is None:
        raise ValueError("agent has no constraint set")
    a = g.alpha[agent]
    off = eq.lambdas[agent] * factor
    on = (g.x0[agent] - (1.0 - a) * off) / a
    if on <= 0:
        raise ValueError("perturbation exhausts the budget")
    wealths = list(eq.wealths)
    wealths[agent] = PiecewiseWealth.from_sets(off, [(s, on)])
    lam = eq.lambdas.copy()
    lam[agent] = off
    return replace(eq, lambdas=lam, wealths=tuple(wealths))


@dataclass(frozen=True)
class PartitionEquilibrium:
    m: int
    ell: np.ndarray
    cells: tuple[ZInterval, ...]
    lambda_matrix: np.ndarray  # m x n
    indicator_matrix: np.ndarray  # m x n, 1 where the constraint is imposed
    converged: bool
    rounds: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def wealths(self) -> tuple[PiecewiseWealth, ...]:
        out = []
        for i in range(self.lambda_matrix.shape[1]):
            cells = [(iv.lo, iv.hi, float(c), -1.0)
                     for iv, c in zip(self.cells, self.lambda_matrix[:, i])]
            out.append(PiecewiseWealth.from_rows(cells))
        return tuple(out)

    def utilities(self, law: LognormalLaw) -> np.ndarray:
        """``E ln X_i = mean_k ln lambda_ki - E ln Z``."""
        return np.mean(np.log(self.lambda_matrix), axis=0) - law.nu


def cell_levels(thresholds: np.ndarray, selected: np.ndarray, total: float) -> np.ndarray:
    """``max(t_k, lam)`` on selected cells and ``lam`` elsewhere, summing to ``total``.

    The sum is piecewise linear and increasing in ``lam`` and is inverted
    exactly.

    Raises:
        InfeasibleError: if the selected thresholds alone use up ``total``.
    """
    t = np.where(selected, thresholds, 0.0)
    if not total > float(np.sum(t)) * (1 + 1e-14):
        raise InfeasibleError(
            f"selected thresholds sum to {float(np.sum(t)):.12g} >= budget {total:.12g}")
    bs = np.sort(t)
    m = bs.size
    suf = np.concatenate((np.cumsum(bs[::-1])[::-1], [0.0]))
    j = np.arange(1, m + 1)
    cand = (total - suf[j]) / j
    upper = np.concatenate((bs[1:], [INF]))
    ok = (cand > bs) & (cand <= upper * (1 + 1e-15))
    lam = float(cand[np.argmax(ok)]) if ok.any() else float(cand[-1])
    return np.maximum(t, lam)


def best_cells(thresholds: np.ndarray, ell: int) -> np.ndarray:
    """The ``ell`` smallest thresholds; ties go to the lower cell index."""
    sel = np.zeros(thresholds.size, bool)
    sel[np.argsort(thresholds, kind="stable")[:ell]] = True
    return sel


def solve_partition(g: GameSpecN, m: int, law: LognormalLaw,
                    max_rounds: int = 1000, tol: float = 1e-12) -> PartitionEquilibrium:
    """Round-robin best-response dynamics on ``m`` equal-probability cells.

    Starts from the unconstrained levels ``lambda_ki = x0_i`` and sweeps the
    agents in order. Stops when a full round moves no level by more than
    ``tol``; a revisited state or the round limit ends the run unconverged.

    Raises:
        InfeasibleError: if some agent cannot fund its best response.
    """
    if m < 1:
        raise ValueError("m must be positive")
    ell_f = g.alpha * m
    ell = np.rint(ell_f).astype(int)
    if np.any(np.abs(ell_f - ell) > 1e-9):
        raise ValueError(f"alpha * m must be integral, got {ell_f.tolist()}")
    cells = tuple(ZInterval(law.quantile_closed(k / m), law.quantile_closed((k + 1) / m))
                  for k in range(m))
    lam = np.tile(g.x0, (m, 1))
    ind = np.zeros((m, g.n), bool)
    seen: dict[bytes, int] = {}
    converged = False
    rnd = 0
    for rnd in range(1, max_rounds + 1):
        before = lam.copy()
        for i in range(g.n):
            t = lam @ g.beta[i]
            sel = best_cells(t, int(ell[i]))
            lam[:, i] = cell_levels(t, sel, m * g.x0[i])
            ind[:, i] = sel
        if float(np.max(np.abs(lam - before))) <= tol:
            converged = True
            break
        key = np.round(lam / tol).tobytes() + ind.tobytes()
        if key in seen:
            return PartitionEquilibrium(m, ell, cells, lam, ind.astype(int), False, rnd,
                                        {"reason": f"cycle: round {rnd} repeats round {seen[key]}"})
        seen[key] = rnd
    diag = {} if converged else {"reason": f"no fixed point within {max_rounds} rounds"}
    return PartitionEquilibrium(m, ell, cells, lam, ind.astype(int), converged, rnd, diag)


@dataclass(frozen=True)
class NashReport:
    improvements: tuple[float, ...]  # inf marks an infeasible wealth
    budget_residuals: tuple[float, ...]
    constraint_probabilities: tuple[float, ...]
    notes: tuple[str, ...]
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.improvements) and all(
            r <= 1e-10 for r in self.budget_residuals)

    @property
    def failed_agents(self) -> list[int]:
        return [i for i, v in enumerate(self.improvements) if not v <= self.tol]


def verify_nash_n(eq: DisjointEquilibrium | PartitionEquilibrium, g: GameSpecN,
                  law: LognormalLaw, m: int = 500, tol: float = 1e-6,
                  threads: int | None = None) -> NashReport:
    """Search every agent's grid best response against the others' wealths.

    Agents are checked concurrently. Grids use ``m`` equal-probability
    cells refined at every breakpoint of the equilibrium wealths.
    """
    wealths = eq.wealths

    def one(i):
        opp = [(g.beta[i, j], wealths[j]) for j in range(g.n) if j != i and g.beta[i, j]]
        prob = outperformance_probability(law, wealths[i], opp) if opp else 1.0
        budget = abs(price(law, wealths[i]) - g.x0[i])
        p = agent_problem(law, m, g.x0[i], g.alpha[i], opp, extra=list(wealths))
        try:
            gain = deviation_search(p, p.grid.project(law, wealths[i]))
            note = ""
        except InfeasibleError as exc:
            gain, note = INF, f"agent {i + 1}: {exc}"
        return gain, budget, prob, note

    with ThreadPoolExecutor(max_workers=threads or min(8, g.n)) as ex:
        res = list(ex.map(one, range(g.n)))
    return NashReport(tuple(r[0] for r in res), tuple(r[1] for r in res),
                      tuple(r[2] for r in res), tuple(r[3] for r in res if r[3]), tol)


