"""Command line: ``nashvar run|verify|list-examples``.

Exit codes: 0 success, 2 invalid config, 3 no equilibrium, 4 infeasible,
5 non-convergence, 6 failed verification or digest mismatch.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from nashvar import __version__
from nashvar import replication as rep
from nashvar.config import ConfigError, ScenarioConfig, example_names, example_text, load
from nashvar.scenarios import INFEASIBLE, NO_EQ, NON_CONV, OK, Outcome, constraint_probabilities
from nashvar.scenarios import solve_member, verify_member

EXIT = {OK: 0, "InvalidConfig": 2, NO_EQ: 3, INFEASIBLE: 4, NON_CONV: 5, "VerificationFailed": 6}
MANIFEST = "manifest.json"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else _fmt(x) for x in r])


def _clean(obj):
    """JSON-safe copy; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _parse_grid(text: str) -> dict:
    try:
        lo, hi, n = text.split(":")
        grid = {"min": float(lo), "max": float(hi), "points": int(n)}
    except ValueError:
        raise ConfigError([f"--grid: expected MIN:MAX:POINTS, got {text!r}"]) from None
    if not (grid["min"] > 0 and grid["max"] > grid["min"] and grid["points"] >= 2):
        raise ConfigError(["--grid: need 0 < MIN < MAX and POINTS >= 2"])
    return grid


def _prepare(args) -> ScenarioConfig:
    sc = load(args.config)
    if args.grid:
        sc.raw["grid"] = _parse_grid(args.grid)
    if args.seed is not None:
        sc.raw["seed"] = args.seed
    return sc


def _solve_all(sc: ScenarioConfig, perturb) -> list[Outcome]:
    return [solve_member(label, cfg, sc.seed, perturb) for label, cfg in sc.members()]


def _exit_code(outcomes: list[Outcome]) -> int:
    if any(o.status == OK for o in outcomes):
        return 0
    return EXIT[outcomes[0].status]


def _payoff_rows(sc: ScenarioConfig, outcomes: list[Outcome]):
    g = sc.grid
    z = np.linspace(g["min"], g["max"], g["points"])
    solved = [o for o in outcomes if o.status == OK]
    names = [n for n, _ in solved[0].wealths] if solved else []
    mnames = [n for n, _ in solved[0].merton] if solved else []
    header = ["member", "z"] + names + mnames
    rows = []
    for o in solved:
        cols = [w(z) for _, w in o.wealths] + [w(z) for _, w in o.merton]
        for k in range(z.size):
            rows.append([o.label, z[k], *(c[k] for c in cols)])
    return header, rows


def _cell_rows(outcomes: list[Outcome]):
    rows = []
    for o in outcomes:
        for name, w in o.wealths:
            for lo, hi, coeff, expo in w.to_rows():
                rows.append([o.label, name, lo, "inf" if hi == math.inf else hi, coeff, expo])
    return ["member", "agent", "z_lo", "z_hi", "coeff", "exponent"], rows


def _summary(sc: ScenarioConfig, outcomes: list[Outcome]) -> dict:
    members = []
    for (label, cfg), o in zip(sc.members(), outcomes):
        entry = {"member": label, "status": o.status, **o.summary}
        if o.status == OK:
            entry["residuals"] = o.residuals
            entry["constraint_probabilities"] = constraint_probabilities(o, cfg)
            entry["wealths"] = {n: [list(r) for r in w.to_rows()] for n, w in o.wealths}
        members.append(entry)
    return {"name": sc.name, "solver": sc.solver, "seed": sc.seed, "members": members}


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    sc = _prepare(args)
    outcomes = _solve_all(sc, args.perturb_lambda)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []

    def emit(name, header, rows):
        _write_csv(out / name, header, rows)
        files.append(name)

    (out / "summary.json").write_text(json.dumps(_clean(_summary(sc, outcomes)), indent=2) + "\n")
    files.append("summary.json")
    emit("payoff.csv", *_payoff_rows(sc, outcomes))
    emit("wealth_cells.csv", *_cell_rows(outcomes))
    for idx, o in enumerate(outcomes):
        if o.simulation is None:
            continue
        for p, path in enumerate(o.simulation.paths()):
            emit(f"paths_m{idx}_p{p}.csv", *rep.path_rows(path))

    manifest = {
        "tool": "nashvar",
        "version": __version__,
        "config_sha256": sc.digest,
        "config_source": sc.source,
        "seed": sc.seed,
        "perturb_lambda": args.perturb_lambda,
        "wall_time_s": time.perf_counter() - t0,
        "members": [{"member": o.label, "status": o.status, "residuals": o.residuals}
                    for o in outcomes],
        "files": {name: _sha256(out / name) for name in files},
    }
    (out / MANIFEST).write_text(json.dumps(_clean(manifest), indent=2) + "\n")
    for o in outcomes:
        print(f"{o.label}: {o.status}")
    return _exit_code(outcomes)


def _check_digests(out: Path) -> list[str]:
    mpath = out / MANIFEST
    if not mpath.exists():
        return []
    manifest = json.loads(mpath.read_text())
    bad = []
    for name, digest in manifest.get("files", {}).items():
        f = out / name
        if not f.exists():
            bad.append(f"{name}: missing")
        elif _sha256(f) != digest:
            bad.append(f"{name}: digest mismatch")
    return bad


def cmd_verify(args) -> int:
    sc = _prepare(args)
    outcomes = []
    for label, cfg in sc.members():
        o = solve_member(label, cfg, sc.seed, args.perturb_lambda)
        outcomes.append(verify_member(o, cfg))
    failed = False
    report = []
    for o in outcomes:
        print(f"{o.label}: {o.status}")
        for name, ok, res in o.checks:
            print(f"  {'PASS' if ok else 'FAIL'} {name} residual={_fmt(res)}")
            failed |= not ok
        report.append({"member": o.label, "status": o.status,
                       "checks": [{"name": n, "passed": ok, "residual": r} for n, ok, r in o.checks]})
    digest_problems = _check_digests(Path(args.out)) if args.out else []
    for p in digest_problems:
        print(f"  FAIL {p}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verification.json").write_text(json.dumps(_clean(
            {"members": report, "digest_problems": digest_problems}), indent=2) + "\n")
    if failed or digest_problems:
        return EXIT["VerificationFailed"]
    return _exit_code(outcomes)


def cmd_list(args) -> int:
    for name in example_names():
        desc = json.loads(example_text(name)).get("description", "")
        print(f"{name}\t{desc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nashvar", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, fn, help_ in (("run", cmd_run, "solve a scenario and write outputs"),
                            ("verify", cmd_verify, "solve and run the verification checks")):
        p = sub.add_parser(verb, help=help_)
        p.add_argument("--config", required=True, help="config file or packaged example name")
        p.add_argument("--out", required=(verb == "run"), help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--grid", help="payoff grid MIN:MAX:POINTS")
        p.add_argument("--format", choices=("csv",), default="csv")
        p.add_argument("--perturb-lambda", type=float, default=None, metavar="FACTOR",
                       help="debug: scale the solved lambda by FACTOR")
        p.set_defaults(fn=fn)
    p = sub.add_parser("list-examples", help="list packaged example configs")
    p.set_defaults(fn=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print("invalid config:", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT["InvalidConfig"]
    except ValueError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT["InvalidConfig"]


if __name__ == "__main__":
    sys.exit(main())
