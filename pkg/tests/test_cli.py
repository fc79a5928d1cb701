import csv
import json
from pathlib import Path

import pytest

from nashvar import cli
from nashvar.config import ConfigError, example_names, example_text, load, loads
from nashvar.market import MarketParams, PiecewiseWealth, price

LAW = MarketParams.one_stock(0.03, 0.2, 4.0).law()


def run(*argv):
    return cli.main(list(argv))


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_examples_are_complete():
    names = example_names()
    assert len(names) >= 12
    for n in names:
        cfg = json.loads(example_text(n))
        assert cfg["description"]
        load(n)


def test_base_payoff_jump(tmp_path):
    assert run("run", "--config", "log2_two_agents", "--out", str(tmp_path),
               "--grid", "0.7:0.8:1001") == 0
    rows = read_csv(tmp_path / "payoff.csv")
    header = rows[0]
    assert header[:4] == ["member", "z", "X1", "X2"]
    assert "merton_2" in header
    data = [[float(v) for v in r[1:]] for r in rows[1:]]
    below = [r for r in data if r[0] < 0.74267]
    above = [r for r in data if r[0] > 0.74269]
    assert below[-1][2] == pytest.approx(0.9 * 3 / below[-1][0], rel=1e-12)
    assert above[0][2] == pytest.approx(1.825 / above[0][0], rel=1e-12)
    summary = json.loads((tmp_path / "summary.json").read_text())
    m = summary["members"][0]
    assert m["case_tag"] == "FamilyFreeSet" and m["lambda2"] == 1.825


def test_number_format(tmp_path):
    run("run", "--config", "log2_two_agents", "--out", str(tmp_path))
    rows = read_csv(tmp_path / "payoff.csv")
    assert rows[1][1] == format(0.05, ".17g")


def test_four_agent_lambda_column(tmp_path):
    assert run("run", "--config", "multi_disjoint_four_agents", "--out", str(tmp_path)) == 0
    lam = json.loads((tmp_path / "summary.json").read_text())["members"][0]["lambdas"]
    assert lam == pytest.approx([5.0, 4.0, 2.9547, 1.6034], abs=5e-5)
    header = read_csv(tmp_path / "payoff.csv")[0]
    assert {"merton_3", "merton_4", "X4"} <= set(header)


def test_empty_config_lists_all_missing(tmp_path, capsys):
    cfg = tmp_path / "empty.json"
    cfg.write_text("{}")
    assert run("run", "--config", str(cfg), "--out", str(tmp_path / "o")) == 2
    err = capsys.readouterr().err
    for field in ("solver", "market.drift", "market.volatility", "market.horizon", "game.x0"):
        assert field in err


def test_syntax_error_has_position():
    with pytest.raises(ConfigError) as exc:
        loads('{"solver":\n', "x.json")
    assert "line 2" in exc.value.problems[0]


def test_bad_fields():
    with pytest.raises(ConfigError) as exc:
        loads(json.dumps({"solver": "nope", "market": {"drift": 0.03, "volatility": 0.2,
                                                        "horizon": 4}, "game": {"x0": [1, 2]},
                          "grid": {"min": -1}}))
    text = " ".join(exc.value.problems)
    assert "unknown solver" in text and "grid.min" in text


def test_bad_grid_flag(tmp_path):
    assert run("run", "--config", "log2_two_agents", "--out", str(tmp_path),
               "--grid", "1:0:5") == 2


def test_missing_file(tmp_path):
    assert run("run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)) == 2


def test_exit_codes(tmp_path):
    base = json.loads(example_text("log2_two_agents"))
    base["game"]["x0"] = [3.0, 0.3]
    cfg = tmp_path / "noeq.json"
    cfg.write_text(json.dumps(base))
    assert run("run", "--config", str(cfg), "--out", str(tmp_path / "a")) == 3
    p = json.loads(example_text("power2_two_agents"))
    p["game"]["alpha2"] = 0.9
    cfg = tmp_path / "inf.json"
    cfg.write_text(json.dumps(p))
    assert run("run", "--config", str(cfg), "--out", str(tmp_path / "b")) == 4
    q = json.loads(example_text("multi_partition_three_agents"))
    q["m"] = 10
    cfg = tmp_path / "nc.json"
    cfg.write_text(json.dumps(q))
    code = run("run", "--config", str(cfg), "--out", str(tmp_path / "c"))
    assert code in (0, 5)


def test_sweep_with_infeasible_member_is_success(tmp_path):
    assert run("run", "--config", "power2_alpha_sweep", "--out", str(tmp_path)) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert [m["status"] for m in s["members"]] == ["ok", "Infeasible"]


def test_determinism(tmp_path):
    for d in ("a", "b"):
        assert run("run", "--config", "simulate_five_paths", "--out", str(tmp_path / d)) == 0
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert len(files) == 7
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    run("run", "--config", "simulate_five_paths", "--out", str(tmp_path / "c"), "--seed", "1")
    assert (tmp_path / "a" / "paths_m0_p0.csv").read_bytes() != \
        (tmp_path / "c" / "paths_m0_p0.csv").read_bytes()
    assert json.loads((tmp_path / "c" / "manifest.json").read_text())["seed"] == 1


def test_path_csv_schema(tmp_path):
    run("run", "--config", "replicate_band_choices", "--out", str(tmp_path))
    rows = read_csv(tmp_path / "paths_m2_p0.csv")
    assert rows[0] == ["time", "Z_t", "closed_form_wealth", "self_financed_wealth",
                       "amount_asset_1", "capped_flag"]
    assert float(rows[1][2]) == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("example", ["log2_band_choices", "power2_two_agents",
                                     "multi_partition_three_agents", "benchmark_stock"])
def test_round_trip(tmp_path, example):
    run("run", "--config", example, "--out", str(tmp_path))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    rows = read_csv(tmp_path / "wealth_cells.csv")[1:]
    cfgs = dict(load(example).members())
    x0 = None
    for mem in manifest["members"]:
        if mem["status"] != "ok":
            continue
        cfg = cfgs[mem["member"]]
        x0 = cfg["game"]["x0"]
        x0 = x0 if isinstance(x0, list) else [x0]
        gamma = cfg.get("gamma", 1.0)
        for k, cap in enumerate(x0):
            name = f"X{k + 1}" if len(x0) > 1 else "X"
            cells = [(float(r[2]), float(r[3]), float(r[4]), float(r[5]))
                     for r in rows if r[0] == mem["member"] and r[1] == name]
            w = PiecewiseWealth.from_rows(cells, gamma)
            key = f"budget_{k + 1}" if len(x0) > 1 else "budget"
            res = abs(price(LAW, w) - cap)
            assert res == pytest.approx(mem["residuals"][key], abs=1e-12)
            assert res <= 1e-9
    assert x0 is not None


def test_manifest_digests_and_tampering(tmp_path, capsys):
    run("run", "--config", "log2_two_agents", "--out", str(tmp_path))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["files"]) == {"summary.json", "payoff.csv", "wealth_cells.csv"}
    assert manifest["config_sha256"] and manifest["version"]
    assert run("verify", "--config", "log2_two_agents", "--out", str(tmp_path)) == 0
    with open(tmp_path / "payoff.csv", "a") as fh:
        fh.write("tampered\n")
    capsys.readouterr()
    assert run("verify", "--config", "log2_two_agents", "--out", str(tmp_path)) == 6
    assert "payoff.csv: digest mismatch" in capsys.readouterr().out


def test_verify_power_passes(capsys):
    assert run("verify", "--config", "power2_two_agents") == 0
    out = capsys.readouterr().out
    assert "PASS lagrangian_pointwise_argmax" in out and "FAIL" not in out


def test_verify_perturbed_lambda_fails_named_check(capsys):
    assert run("verify", "--config", "power2_two_agents", "--perturb-lambda", "1.05") == 6
    out = capsys.readouterr().out
    assert "FAIL lagrangian_jump_at_split" in out
    assert run("verify", "--config", "log2_two_agents", "--perturb-lambda", "1.01") == 6
    assert "FAIL budget_2_residual" in capsys.readouterr().out


def test_verify_multi(capsys):
    assert run("verify", "--config", "multi_disjoint_four_agents") == 0
    assert run("verify", "--config", "multi_disjoint_four_agents",
               "--perturb-lambda", "0.99") == 6
    assert "FAIL no_deviation_agent_4" in capsys.readouterr().out


def test_list_examples(capsys):
    assert run("list-examples") == 0
    assert "log2_two_agents" in capsys.readouterr().out


def test_console_script_entry_point():
    from importlib.metadata import entry_points
    eps = [e for e in entry_points(group="console_scripts") if e.name == "nashvar"]
    assert eps and eps[0].value == "nashvar.cli:main"
