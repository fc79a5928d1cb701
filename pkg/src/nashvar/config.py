"""Scenario configuration: loading, validation and sweep expansion."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

SOLVERS = ("log2", "power2", "multi_disjoint", "multi_partition", "benchmark",
           "replicate", "simulate")

# required keys below "game" per solver
_GAME_KEYS = {
    "log2": ("x0", "alpha2", "beta1"),
    "power2": ("x0", "alpha2", "beta1"),
    "replicate": ("x0", "alpha2", "beta1"),
    "simulate": ("x0", "alpha2", "beta1"),
    "multi_disjoint": ("x0", "alpha", "beta"),
    "multi_partition": ("x0", "alpha", "beta"),
    "benchmark": ("x0", "alpha", "beta"),
}

DEFAULT_GRID = {"min": 0.05, "max": 3.0, "points": 400}


class ConfigError(ValueError):
    """Invalid scenario; ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class ScenarioConfig:
    raw: dict
    digest: str  # sha256 of the source bytes
    source: str

    @property
    def name(self) -> str:
        return self.raw.get("name", "scenario")

    @property
    def solver(self) -> str:
        return self.raw["solver"]

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def grid(self) -> dict:
        return {**DEFAULT_GRID, **self.raw.get("grid", {})}

    def members(self) -> list[tuple[str, dict]]:
        """``(label, config)`` per sweep value, or the single scenario."""
        sweep = self.raw.get("sweep")
        if not sweep:
            return [("base", self.raw)]
        out = []
        for v in sweep["values"]:
            cfg = copy.deepcopy(self.raw)
            cfg.pop("sweep")
            set_path(cfg, sweep["param"], v)
            out.append((f"{sweep['param']}={v}", cfg))
        return out


def set_path(cfg: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _get(cfg: dict, dotted: str):
    node = cfg
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            return None
        node = node[k]
    return node


def validate(cfg: Any) -> list[str]:
    """All problems of a parsed config (empty list when valid)."""
    if not isinstance(cfg, dict):
        return ["top level must be a JSON object"]
    problems = []
    solver = cfg.get("solver")
    if solver is None:
        problems.append("missing field 'solver'")
    elif solver not in SOLVERS:
        problems.append(f"field 'solver': unknown solver {solver!r}, expected one of {SOLVERS}")
    for k in ("market.drift", "market.volatility", "market.horizon"):
        if _get(cfg, k) is None:
            problems.append(f"missing field '{k}'")
    for k in _GAME_KEYS.get(solver, ("x0",)):
        if _get(cfg, f"game.{k}") is None:
            problems.append(f"missing field 'game.{k}'")
    if solver == "power2" and cfg.get("gamma") is None:
        problems.append("missing field 'gamma'")
    if solver == "multi_partition" and cfg.get("m") is None:
        problems.append("missing field 'm'")
    x0 = _get(cfg, "game.x0")
    if x0 is not None:
        want = {"log2": 2, "power2": 2, "replicate": 2, "simulate": 2}.get(solver)
        if want and not (isinstance(x0, list) and len(x0) == want):
            problems.append(f"field 'game.x0': need a list of {want} capitals")
        if solver == "benchmark" and not isinstance(x0, (int, float)):
            problems.append("field 'game.x0': the benchmark needs one capital")
        if solver in ("multi_disjoint", "multi_partition") and not (
                isinstance(x0, list) and len(x0) >= 3):
            problems.append("field 'game.x0': need a list of at least 3 capitals")
    grid = cfg.get("grid")
    if grid is not None:
        if not isinstance(grid, dict):
            problems.append("field 'grid': must be an object with min, max, points")
        else:
            g = {**DEFAULT_GRID, **grid}
            if not (isinstance(g["min"], (int, float)) and g["min"] > 0):
                problems.append("field 'grid.min': must be > 0")
            if not (isinstance(g["max"], (int, float)) and g["max"] > g["min"]):
                problems.append("field 'grid.max': must exceed grid.min")
            if not (isinstance(g["points"], int) and g["points"] >= 2):
                problems.append("field 'grid.points': need an integer >= 2")
    sweep = cfg.get("sweep")
    if sweep is not None:
        if not (isinstance(sweep, dict) and isinstance(sweep.get("param"), str)
                and isinstance(sweep.get("values"), list) and sweep["values"]):
            problems.append("field 'sweep': need 'param' (dotted path) and a non-empty 'values'")
    sim = cfg.get("simulation")
    if sim is not None:
        for k in ("steps", "n_paths"):
            v = sim.get(k) if isinstance(sim, dict) else None
            if v is not None and not (isinstance(v, int) and v >= 1):
                problems.append(f"field 'simulation.{k}': need a positive integer")
    return problems


def loads(text: str, source: str = "<string>") -> ScenarioConfig:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(cfg, hashlib.sha256(text.encode()).hexdigest(), source)


def example_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("nashvar.examples").iterdir()
                  if p.name.endswith(".json"))


def example_text(name: str) -> str:
    return resources.files("nashvar.examples").joinpath(f"{name}.json").read_text()


def load(path: str) -> ScenarioConfig:
    """Read a config file; a bare packaged example name is accepted too."""
    p = Path(path)
    if not p.exists() and path in example_names():
        return loads(example_text(path), f"example:{path}")
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    return loads(text, str(p))
