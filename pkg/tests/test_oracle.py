import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from nashvar.errors import InfeasibleError
from nashvar.market import MarketParams, PiecewiseWealth, expected_utility
from nashvar.oracle import (
    GridProblem,
    _floor_solve,
    agent_problem,
    best_response,
    cheapest_cells,
    deviation_search,
    equal_mass_error,
    lambda_alpha,
    make_grid,
    solve_floor,
    solve_partial,
)
from nashvar.two_log import GameSpec2, solve_log2
from nashvar.utility import crra

LAW = MarketParams.one_stock(0.03, 0.2, 4.0).law()


@pytest.fixture(scope="module")
def base_eq():
    return solve_log2(GameSpec2(3.0, 2.0, 1.0, 0.2, 0.9, 1.0), LAW)


def test_grid_structure():
    g = make_grid(LAW, 50, [0.74268])
    assert g.edges[0] == 0.0 and np.isinf(g.edges[-1])
    assert g.mass.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.any(np.isclose(g.edges, 0.74268, rtol=1e-14))
    # conditional means price 1/Z payoffs exactly
    w = PiecewiseWealth.merton(2.0)
    assert g.price(g.project(LAW, w)) == pytest.approx(2.0, rel=1e-13)
    assert np.all(g.zbar > g.edges[:-1]) and np.all(g.zbar < g.edges[1:])


def _concave_oracle(p):
    g = p.grid

    def neg(x):
        return -float(np.sum(g.mass * crra(x, p.gamma)))

    cons = [{"type": "eq", "fun": lambda x: g.price(x) - p.budget}]
    x0 = np.maximum(p.threshold * 1.01, p.budget / (g.mass * g.zbar).sum()) 
    x0 *= p.budget / g.price(x0)
    res = minimize(neg, x0, method="SLSQP", bounds=[(t, None) for t in p.threshold],
                   constraints=cons, options={"ftol": 1e-15, "maxiter": 500})
    return -res.fun


@pytest.mark.parametrize("gamma", [1.0, 0.7, 1.5])
@pytest.mark.parametrize("seed", range(3))
def test_solve_floor_matches_concave_program(gamma, seed):
    rng = np.random.default_rng(seed)
    g = make_grid(LAW, 8)
    y = rng.uniform(0.1, 0.8, size=8) / g.zbar ** (1 / gamma)
    p = GridProblem(g, y, 1.0, 1.5, gamma)
    s = solve_floor(p)
    assert g.price(s.values) == pytest.approx(1.5, abs=1e-12)
    assert np.all(s.values >= y * (1 - 1e-14))
    assert s.utility == pytest.approx(_concave_oracle(p), abs=1e-7)
    assert s.utility >= _concave_oracle(p) - 1e-9


def test_solve_floor_requires_full_alpha():
    p = GridProblem(make_grid(LAW, 4), np.zeros(4), 0.5, 1.0)
    with pytest.raises(ValueError):
        solve_floor(p)


def test_solve_floor_infeasible():
    g = make_grid(LAW, 4)
    p = GridProblem(g, np.full(4, 10.0), 1.0, 1.0)
    with pytest.raises(InfeasibleError):
        solve_floor(p)


def test_partial_structure(base_eq):
    p = agent_problem(LAW, 500, 2.0, 0.2, [(0.9, base_eq.wealth1)], extra=[base_eq.wealth2])
    s = solve_partial(p)
    assert p.grid.price(s.values) == pytest.approx(2.0, abs=1e-12)
    assert s.level == pytest.approx(1.825, rel=1e-12)
    free = ~s.selected | (s.values > p.threshold * (1 + 1e-12))
    np.testing.assert_allclose(s.values[free], s.level / p.grid.zbar[free], rtol=1e-13)
    assert p.grid.mass[s.selected].sum() >= 0.2 - 1e-12
    assert p.grid.mass[s.selected].sum() < 0.2 + 1.0 / 500


def test_solve_partial_rejects_power():
    p = GridProblem(make_grid(LAW, 4), np.zeros(4), 0.5, 1.0, 0.7)
    with pytest.raises(ValueError):
        solve_partial(p)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("m, alpha", [(8, 0.25), (10, 0.3), (12, 0.25)])
def test_cheapest_selection_is_optimal(seed, m, alpha):
    rng = np.random.default_rng(100 + seed)
    g = make_grid(LAW, m)
    y = rng.uniform(0.05, 0.6, size=m) / g.zbar
    p = GridProblem(g, y, alpha, 1.0)
    best = solve_partial(p).utility
    need = int(np.sum(cheapest_cells(p)))
    for size in (need, need + 1):
        for subset in itertools.combinations(range(m), size):
            sel = np.zeros(m, bool)
            sel[list(subset)] = True
            try:
                u = _floor_solve(p, sel).utility
            except InfeasibleError:
                continue
            assert u <= best + 1e-12


def test_power_best_response_matches_enumeration():
    gamma = 0.7
    g = make_grid(LAW, 10)
    x1 = PiecewiseWealth.merton(3.0 / LAW.epsilon(gamma), gamma)
    y = 0.9 * g.project(LAW, x1)
    p = GridProblem(g, y, 0.5, 2.0, gamma)
    best = best_response(p).utility
    brute = -np.inf
    for size in range(5, 11):
        for subset in itertools.combinations(range(10), size):
            sel = np.zeros(10, bool)
            sel[list(subset)] = True
            try:
                brute = max(brute, _floor_solve(p, sel).utility)
            except InfeasibleError:
                pass
    assert best == pytest.approx(brute, rel=1e-12)


def test_refinement_monotone(base_eq):
    exact = expected_utility(LAW, base_eq.wealth2)
    errs = []
    for m in (125, 250, 500, 1000):
        p = agent_problem(LAW, m, 2.0, 0.2, [(0.9, base_eq.wealth1)], extra=[base_eq.wealth2])
        s = solve_partial(p)
        assert s.level == pytest.approx(1.825, rel=1e-12)
        errs.append(abs(s.utility - exact))
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[0] == pytest.approx(7.8369e-5, rel=1e-3)
    # the error is the Jensen gap of the projection, O(1/m)
    for m, e in zip((125, 250, 500, 1000), errs):
        assert equal_mass_error(LAW, base_eq.wealth2, m) == pytest.approx(e, rel=1e-8)
        assert e * m < 0.01


def test_deviation_search(base_eq):
    p = agent_problem(LAW, 200, 2.0, 0.2, [(0.9, base_eq.wealth1)], extra=[base_eq.wealth2])
    sol = solve_partial(p)
    assert deviation_search(p, sol.values) == 0.0
    # a feasible but worse candidate: move budget onto the floor cells
    worse = sol.values.copy()
    worse[sol.selected] *= 1.05
    worse[~sol.selected] *= (2.0 - p.grid.price(worse * sol.selected)) / p.grid.price(
        sol.values * ~sol.selected)
    assert deviation_search(p, worse) > 1e-6
    with pytest.raises(InfeasibleError, match="budget"):
        deviation_search(p, sol.values * 1.01)
    with pytest.raises(InfeasibleError, match="probability"):
        deviation_search(p, np.full(p.grid.m, 2.0) / p.grid.zbar * 0.999)


def test_lambda_alpha(base_eq):
    p = agent_problem(LAW, 500, 2.0, 0.2, [(0.9, base_eq.wealth1)], extra=[base_eq.wealth2])
    # Y Z = 0.9 * 3 everywhere, so any budget at or above 2.7 meets the constraint freely
    assert lambda_alpha(p) == pytest.approx(2.7, rel=1e-12)


def test_problem_validation():
    g = make_grid(LAW, 4)
    with pytest.raises(ValueError):
        GridProblem(g, np.zeros(3), 0.5, 1.0)
    with pytest.raises(ValueError):
        GridProblem(g, np.zeros(4), 1.5, 1.0)
    with pytest.raises(ValueError):
        GridProblem(g, np.zeros(4), 0.5, -1.0)
