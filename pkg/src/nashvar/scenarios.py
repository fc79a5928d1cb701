"""Solve and verify one scenario member; the command line wraps these."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from nashvar.errors import ConvergenceError, InfeasibleError, NoEquilibriumError
from nashvar.market import (
    INF,
    MarketParams,
    PiecewiseWealth,
    ZInterval,
    interval_upper_bound,
    outperformance_probability,
    price,
)
from nashvar.multi_log import (
    GameSpecN,
    perturbed_disjoint,
    solve_disjoint,
    solve_partition,
    verify_nash_n,
)
from nashvar.oracle import agent_problem, deviation_search
from nashvar import replication as rep
from nashvar import two_log, two_power

OK, NO_EQ, INFEASIBLE, NON_CONV = "ok", "NoEquilibrium", "Infeasible", "NonConvergence"


@dataclass
class Outcome:
    label: str
    status: str
    summary: dict
    wealths: list[tuple[str, PiecewiseWealth]] = field(default_factory=list)
    merton: list[tuple[str, PiecewiseWealth]] = field(default_factory=list)
    simulation: rep.Simulation | None = None
    residuals: dict = field(default_factory=dict)
    handle: object = None  # solver result, for verification
    checks: list[tuple[str, bool, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)


def market_of(cfg: dict) -> MarketParams:
    mk = cfg["market"]
    return MarketParams(np.atleast_1d(mk["drift"]), np.atleast_2d(mk["volatility"]),
                        float(mk["horizon"]))


def _interval_json(iv: ZInterval | None):
    return None if iv is None else [iv.lo, "inf" if iv.hi == INF else iv.hi]


def _game2(cfg: dict, gamma: float = 1.0) -> two_log.GameSpec2:
    g = cfg["game"]
    x01, x02 = g["x0"]
    return two_log.GameSpec2(float(x01), float(x02), float(g.get("alpha1", 1.0)),
                             float(g["alpha2"]), float(g["beta1"]),
                             float(g.get("beta2", 0.0)), gamma)


def _a2_choice(cfg: dict, law) -> ZInterval | None:
    ov = cfg.get("a2_override")
    if not ov:
        return None
    if "c1" in ov:
        c1 = float(ov["c1"])
        if c1 == 0.0:
            return None
        return ZInterval(c1, interval_upper_bound(law, c1, float(cfg["game"]["alpha2"])))
    hi = ov["hi"]
    return ZInterval(float(ov["lo"]), INF if hi == "inf" else float(hi))


def solve_member(label: str, cfg: dict, seed: int, perturb: float | None = None) -> Outcome:
    solver = cfg["solver"]
    m = market_of(cfg)
    law = m.law()
    try:
        return _SOLVERS[solver](label, cfg, m, law, seed, perturb)
    except NoEquilibriumError as exc:
        return Outcome(label, NO_EQ, {"reason": str(exc)})
    except InfeasibleError as exc:
        return Outcome(label, INFEASIBLE, {"reason": str(exc)})
    except ConvergenceError as exc:
        return Outcome(label, NON_CONV, {"reason": str(exc)})


def _log2(label, cfg, m, law, seed, perturb):
    g = _game2(cfg)
    r = two_log.solve_log2(g, law, _a2_choice(cfg, law))
    summary = {"case_tag": r.case_tag.value, "relabeled": g.relabeled,
               "lambda2": r.lambda2, "free_set": _interval_json(r.free_set),
               "diagnostics": _jsonable(r.diagnostics)}
    if not r.has_equilibrium:
        return Outcome(label, NO_EQ, summary)
    if perturb is not None:
        r = two_log.with_lambda2(r, r.lambda2 * perturb)
    w1, w2 = r.wealth1, r.wealth2
    c1, c2 = two_log.relabel_back(r)
    x_caller = [float(x) for x in cfg["game"]["x0"]]
    out = Outcome(label, OK, summary, [("X1", c1), ("X2", c2)],
                  [(f"merton_{i + 1}", PiecewiseWealth.merton(x)) for i, x in enumerate(x_caller)],
                  handle=r)
    out.residuals = {"budget_1": abs(price(law, w1) - g.x01),
                     "budget_2": abs(price(law, w2) - g.x02)}
    return out


def _power2(label, cfg, m, law, seed, perturb):
    gam = float(cfg["gamma"])
    g = _game2(cfg, gam)
    r = two_power.solve_power2(g, law)
    summary = {"feasibility_case": r.feasibility_case.value, "relabeled": g.relabeled,
               "lambda2": r.lambda2, "kappa": r.kappa, "eta2": r.eta2,
               "split_quantile": r.split_quantile, "band": _interval_json(r.band),
               "diagnostics": _jsonable(r.diagnostics)}
    if r.feasibility_case is two_power.FeasibilityCase.INFEASIBLE:
        return Outcome(label, INFEASIBLE, summary)
    if perturb is not None and r.constrained:
        r = two_power.with_lambda2(r, r.lambda2 * perturb)
    eps = law.epsilon(gam)
    ws = (r.wealth1, r.wealth2)[::-1] if g.relabeled else (r.wealth1, r.wealth2)
    x_caller = [float(x) for x in cfg["game"]["x0"]]
    out = Outcome(label, OK, summary, [("X1", ws[0]), ("X2", ws[1])],
                  [(f"merton_{i + 1}", PiecewiseWealth.merton(x / eps, gam))
                   for i, x in enumerate(x_caller)], handle=r)
    out.residuals = {"budget_1": abs(price(law, r.wealth1) - g.x01),
                     "budget_2": abs(price(law, r.wealth2) - g.x02)}
    return out


def _game_n(cfg):
    g = cfg["game"]
    return GameSpecN(g["x0"], g["alpha"], g["beta"])


def _multi(label, cfg, m, law, seed, perturb, partition=False):
    g = _game_n(cfg)
    if partition:
        eq = solve_partition(g, int(cfg["m"]), law)
        summary = {"converged": eq.converged, "rounds": eq.rounds, "m": eq.m,
                   "ell": g.to_caller(eq.ell.tolist()),
                   "lambda_matrix": [g.to_caller(row) for row in eq.lambda_matrix.tolist()],
                   "indicator_matrix": [g.to_caller(row) for row in eq.indicator_matrix.tolist()],
                   "diagnostics": eq.diagnostics}
        if not eq.converged:
            return Outcome(label, NON_CONV, summary)
    else:
        eq = solve_disjoint(g, law)
        if perturb is not None:
            k = max(i for i in range(g.n) if eq.sets[i] is not None)
            eq = perturbed_disjoint(eq, g, k, perturb)
        summary = {"lambdas": g.to_caller(eq.lambdas.tolist()), "iterations": eq.iterations,
                   "lambda_residual": eq.residual,
                   "sets": g.to_caller([_interval_json(s) for s in eq.sets])}
    wealths = g.to_caller(list(eq.wealths))
    x0 = g.to_caller(g.x0.tolist())
    out = Outcome(label, OK, summary, [(f"X{i + 1}", w) for i, w in enumerate(wealths)],
                  [(f"merton_{i + 1}", PiecewiseWealth.merton(x)) for i, x in enumerate(x0)],
                  handle=(g, eq))
    out.residuals = {f"budget_{i + 1}": abs(price(law, w) - x0[i]) for i, w in enumerate(wealths)}
    return out


def _benchmark(label, cfg, m, law, seed, perturb):
    gm = cfg["game"]
    s = two_log.solve_benchmark(float(gm["x0"]), float(gm["beta"]), float(gm["alpha"]), m)
    summary = {"lambda": s.lam, "lambda_alpha": s.lambda_alpha, "band": _interval_json(s.band),
               "constraint_probability": s.constraint_probability}
    a, e = two_log.benchmark_payoff(m, float(gm["beta"]))
    bench = PiecewiseWealth.from_rows([(0.0, INF, a, e)]) if a > 0 else None
    out = Outcome(label, OK, summary,
                  [("X", s.wealth)] + ([("beta_S_T", bench)] if bench else []),
                  [("merton", PiecewiseWealth.merton(float(gm["x0"])))], handle=s)
    out.residuals = {"budget": s.budget_residual}
    return out


def _replicate(label, cfg, m, law, seed, perturb, default_paths=1):
    out = _log2(label, cfg, m, law, seed, None)
    if out.status != OK:
        return out
    r = out.handle
    sim_cfg = cfg.get("simulation", {})
    steps = int(sim_cfg.get("steps", 1000))
    n_paths = int(sim_cfg.get("n_paths", default_paths))
    claim = rep.equilibrium_claim(r)
    out.simulation = rep.simulate(m, claim, steps, n_paths, seed,
                                  cap=float(sim_cfg.get("cap", rep.DEFAULT_CAP)))
    x1_terminal = r.game.beta1 * rep.equilibrium_claim(r, 1).payoff(out.simulation.z[:, -1])
    hit = out.simulation.payoff >= x1_terminal * (1 - 1e-12)
    out.summary["simulation"] = {
        "steps": steps, "n_paths": n_paths, "seed": seed,
        "initial_wealth": float(out.simulation.wealth[0, 0]),
        "constraint_frequency": float(np.mean(hit)),
        "capped_samples": int(np.sum(out.simulation.capped)),
        "mean_terminal_gap": float(np.mean(out.simulation.terminal_gap())),
    }
    return out


def _simulate(label, cfg, m, law, seed, perturb):
    return _replicate(label, cfg, m, law, seed, perturb, default_paths=5)


_SOLVERS = {
    "log2": _log2,
    "power2": _power2,
    "multi_disjoint": _multi,
    "multi_partition": lambda *a: _multi(*a, partition=True),
    "benchmark": _benchmark,
    "replicate": _replicate,
    "simulate": _simulate,
}


def verify_member(out: Outcome, cfg: dict, grid_m: int = 500) -> Outcome:
    """Attach named checks to a solved member."""
    if out.status != OK:
        return out
    m = market_of(cfg)
    law = m.law()
    solver = cfg["solver"]
    checks = out.checks
    for k, v in out.residuals.items():
        checks.append((f"{k}_residual", v <= 1e-9, v))
    if solver in ("log2", "replicate", "simulate", "power2"):
        r = out.handle
        g = r.game
        gam = g.gamma
        w1, w2 = r.wealth1, r.wealth2
        if solver == "power2" and r.constrained:
            v = two_power.verify_lagrangian(r, law)
            checks.extend((f"lagrangian_{c.name}", c.passed, c.residual) for c in v.checks)
        for name, budget, alpha, opp, own in (
                ("agent_1", g.x01, g.alpha1, [(g.beta2, w2)], w1),
                ("agent_2", g.x02, g.alpha2, [(g.beta1, w1)], w2)):
            checks.append(_deviation(law, grid_m, budget, alpha, opp, own, gam, name, [w1, w2]))
    elif solver in ("multi_disjoint", "multi_partition"):
        g, eq = out.handle
        if solver == "multi_disjoint":
            checks.append(("lambda_fixed_point", eq.residual <= 1e-10, eq.residual))
        rep_n = verify_nash_n(eq, g, law, m=grid_m)
        for k, v in enumerate(rep_n.improvements):
            agent = int(g.order[k]) + 1
            checks.append((f"no_deviation_agent_{agent}", v <= 1e-6, v))
    elif solver == "benchmark":
        s = out.handle
        gm = cfg["game"]
        bench = [(1.0, w) for n, w in out.wealths if n == "beta_S_T"]
        checks.append(_deviation(law, grid_m, float(gm["x0"]), float(gm["alpha"]), bench,
                                 s.wealth, 1.0, "investor", [s.wealth]))
        prob = s.constraint_probability
        checks.append(("constraint_probability", prob >= float(gm["alpha"]) - 1e-10, prob))
    if solver in ("replicate", "simulate"):
        r = out.handle
        state = rep.PathState(0.0, 1.0, np.zeros(m.num_assets))
        x, _ = rep.equilibrium_claim(r).pair(state, m)
        res = abs(x - r.game.x02)
        checks.append(("initial_price", res <= 1e-9, res))
        bands = [rep.DigitalBand(0.0, 0.75), rep.DigitalBand(0.75, 1.2), rep.DigitalBand(1.2, INF)]
        st = rep.PathState(m.horizon / 2, 1.0, np.zeros(m.num_assets))
        parts = [rep.digital_pair(b, st, m) for b in bands]
        full = rep.digital_pair(rep.DigitalBand(0.0, INF), st, m)
        gap = max(abs(sum(p[0] for p in parts) - full[0]),
                  float(np.max(np.abs(sum(p[1] for p in parts) - full[1]))))
        checks.append(("band_additivity", gap <= 1e-12, gap))
    return out


def _deviation(law, grid_m, budget, alpha, opp, own, gamma, name, extra):
    opp = [(b, w) for b, w in opp if b]
    p = agent_problem(law, grid_m, budget, alpha, opp, gamma=gamma, extra=extra)
    try:
        gain = deviation_search(p, p.grid.project(law, own))
    except InfeasibleError:
        return (f"no_deviation_{name}", False, INF)
    return (f"no_deviation_{name}", gain <= 1e-6, gain)


def constraint_probabilities(out: Outcome, cfg: dict) -> dict:
    law = market_of(cfg).law()
    if cfg["solver"] in ("log2", "power2", "replicate", "simulate") and out.status == OK:
        g = out.handle.game
        r = out.handle
        return {"agent_2": outperformance_probability(law, r.wealth2, [(g.beta1, r.wealth1)]),
                "agent_1": outperformance_probability(law, r.wealth1, [(g.beta2, r.wealth2)])}
    return {}


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            out[k] = str(v)
        elif isinstance(v, (np.floating, np.integer)):
            out[k] = v.item()
        else:
            out[k] = v
    return out
