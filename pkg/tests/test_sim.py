import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from roadauth.cli import main
from roadauth.errors import ConfigError
from roadauth.sim import AdversarySpec, ScenarioConfig, run_scenario
from roadauth.sim.bench import bench_phase
from roadauth.sim.report import REFERENCE_LABEL, render_cost_report

SCENARIOS = sorted((Path(__file__).parent.parent / "scenarios").glob("*.json"))


def small(**kw):
    base = dict(num_vehicles=10, num_rsus=2, seed=1, prime="default")
    base.update(kw)
    return ScenarioConfig(**base)


def test_honest_run():
    s = run_scenario(small()).summary
    assert s["ok"]
    assert s["sessions"]["completed"] == s["sessions"]["attempted"] == 30
    assert s["sessions"]["key_agreement"] == 20
    assert s["addresses"]["duplicates"] == 0 and s["addresses"]["adopted"] == 10
    assert s["identity_recovery"]["checked"] == s["identity_recovery"]["correct"] == 10
    assert s["secret_leaks"] == 0


def test_same_seed_same_bytes():
    cfg = small(adversaries=[AdversarySpec("replay"), AdversarySpec("bitflip", {"trials": 3})])
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.to_json() == b.to_json()
    assert a.to_csv() == b.to_csv()


def test_different_seed_different_transcript():
    assert run_scenario(small(seed=1)).to_csv() != run_scenario(small(seed=2)).to_csv()


@pytest.mark.parametrize(
    "change",
    [
        {"num_rsus": 0},
        {"num_vehicles": -1},
        {"split_i": 4},
        {"prime": "huge"},
        {"seed": -1},
        {"seed": 2**64},
        {"delta_window_secs": 0},
        {"adversaries": [AdversarySpec("teleport")]},
    ],
)
def test_config_errors(change):
    with pytest.raises(ConfigError):
        run_scenario(small(**change))


def test_config_from_json(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"num_vehicles": 3, "adversaries": ["replay", {"kind": "exhaustion", "requests": 5}]}))
    cfg = ScenarioConfig.from_json(p)
    assert cfg.adversaries == [AdversarySpec("replay", {}), AdversarySpec("exhaustion", {"requests": 5})]
    p.write_text(json.dumps({"num_vehicles": 3, "wheels": 4}))
    with pytest.raises(ConfigError):
        ScenarioConfig.from_json(p)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ScenarioConfig.from_json(p)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_json(tmp_path / "missing.json")


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_presets_contain_every_adversary(path):
    report = run_scenario(ScenarioConfig.from_json(path))
    s = report.summary
    assert report.ok
    for kind, entry in s["adversaries"].items():
        assert entry["succeeded"] == 0, kind
    assert s["sessions"]["completed"] <= s["sessions"]["attempted"]
    # conservation: every honest session either completed or was rejected with a typed error
    assert s["sessions"]["attempted"] == s["sessions"]["completed"] + sum(s["rejections"].values())


def test_replay_outcomes():
    s = run_scenario(small(num_vehicles=12, sessions_per_vehicle=2, adversaries=[AdversarySpec("replay")])).summary
    replay = s["adversaries"]["replay"]
    assert replay["succeeded"] == 0 and replay["attempts"] == 18
    assert set(replay["outcomes"]) <= {"StaleTimestamp", "AuthFailure", "Incomplete"}
    assert s["sessions"]["unattacked_failures"] == 0


def test_forgery_rejected_but_control_accepted():
    s = run_scenario(small(num_vehicles=12, adversaries=[AdversarySpec("forge_address")])).summary
    forge = s["adversaries"]["forge_address"]
    assert forge["attempts"] == 9 and forge["succeeded"] == 0
    assert s["controls"]["beacons_sent"] == 3
    assert s["controls"]["beacons_endorsed"] == 3
    assert s["controls"]["notices_accepted"] > 0


def test_fake_conflict():
    s = run_scenario(small(num_vehicles=8, adversaries=[AdversarySpec("fake_conflict")])).summary
    conflict = s["adversaries"]["fake_conflict"]
    assert conflict["attempts"] == 3 and conflict["succeeded"] == 0
    assert "ConflictRejected" in conflict["outcomes"]


def test_exhaustion_leaves_honest_allocations_alone():
    clean = run_scenario(small(num_vehicles=20, prime="test"))
    attacked = run_scenario(small(num_vehicles=20, prime="test",
                                  adversaries=[AdversarySpec("exhaustion", {"requests": 300})]))
    exh = attacked.summary["adversaries"]["exhaustion"]
    assert exh["succeeded"] == 0
    assert exh["occupancy_before"] == exh["occupancy_after"]
    assert attacked.summary["addresses"]["allocated"] == clean.summary["addresses"]["allocated"] == 20
    honest = lambda r: [(x["vehicle"], x["kind"], x["status"]) for x in r.rows if x["honest"]]
    assert honest(attacked) == honest(clean)


def test_bitflip_small():
    s = run_scenario(small(num_vehicles=60, prime="test", adversaries=[AdversarySpec("bitflip", {"trials": 60})])).summary
    flips = s["adversaries"]["bitflip"]
    assert flips["trials"] == flips["attempts"] == 60
    assert flips["succeeded"] == 0
    assert "Incomplete" not in flips["outcomes"]


def test_counters_scale_linearly():
    one = run_scenario(small(num_vehicles=5, prime="test")).summary["cost"]["phases"]
    two = run_scenario(small(num_vehicles=10, prime="test")).summary["cost"]["phases"]
    for phase in ("first-login", "consequent", "address", "registration"):
        for kind, n in one[phase]["total"].items():
            assert two[phase]["total"][kind] == 2 * n, (phase, kind)
    for phase in one.values():
        total = phase["total"]
        for kind in total:
            assert total[kind] == sum(e[kind] for e in phase["by_entity"].values())


@pytest.mark.parametrize("phase, cheby", [("first-login", {"user": 3, "rsu": 3, "server": 2}),
                                          ("consequent", {"user": 2, "rsu": 2})])
def test_bench_counts(phase, cheby):
    result = bench_phase(phase, 3, prime="test")
    data = result["cost"]["phases"][phase]
    assert {e: c["cheby_evals"] // 3 for e, c in data["by_entity"].items()} == cheby
    assert data["per_session"]["cheby_evals"] == sum(cheby.values())


def test_cost_report_reference_rows():
    text = render_cost_report(run_scenario(small(num_vehicles=2)).summary["cost"])
    assert "≈ 500 T_sym / ≈ 1028 T_sym / ≈ 602 T_sym" in text
    assert REFERENCE_LABEL in text and "not reproduced" in text


# -- command line ----------------------------------------------------------------

@pytest.fixture
def scenario_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"num_vehicles": 4, "num_rsus": 2, "prime": "test", "adversaries": ["replay"]}))
    return p


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_cli_run(tmp_path, scenario_file, fmt):
    out = tmp_path / f"report.{fmt}"
    args = ["run", "--scenario", str(scenario_file), "--seed", "5", "--report", str(out), "--format", fmt]
    res = CliRunner().invoke(main, args)
    assert res.exit_code == 0, res.output
    first = out.read_bytes()
    assert CliRunner().invoke(main, args).exit_code == 0
    assert out.read_bytes() == first
    if fmt == "json":
        assert json.loads(first)["scenario"]["seed"] == 5
    else:
        assert first.startswith(b"sid,kind,vehicle")


def test_cli_run_stdout_and_cost(scenario_file):
    res = CliRunner().invoke(main, ["run", "--scenario", str(scenario_file), "--cost"])
    assert res.exit_code == 0
    assert '"ok": true' in res.output
    assert "≈ 1028 T_sym" in res.output


def test_cli_run_bad_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"num_rsus": 0}))
    res = CliRunner().invoke(main, ["run", "--scenario", str(p)])
    assert res.exit_code == 2 and "num_rsus" in res.output


def test_cli_fuzz():
    res = CliRunner().invoke(main, ["fuzz", "--trials", "30", "--seed", "4", "--prime", "test"])
    assert res.exit_code == 0, res.output
    assert "trials 30, completed 0, typed errors 30" in res.output


@pytest.mark.parametrize("phase", ["first-login", "consequent", "address"])
def test_cli_bench(phase):
    res = CliRunner().invoke(main, ["bench", "--phase", phase, "--iters", "2", "--prime", "test", "--json"])
    assert res.exit_code == 0, res.output
    assert json.loads(res.output)["iters"] == 2


def test_cli_selftest_small():
    res = CliRunner().invoke(main, ["selftest", "--n-max", "20"])
    assert res.exit_code == 0, res.output
    assert res.output.count("PASS") == 2
