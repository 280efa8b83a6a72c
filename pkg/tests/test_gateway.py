import json
from pathlib import Path

import pytest
import yaml

from qnetsim.gateway import (
    ResultRecord,
    ScenarioError,
    load_scenario_file,
    read_results,
    run_scenario,
    summarize,
    sweep_coexistence,
)
from qnetsim.gateway.cli import main as cli_main

SCENARIOS = Path(__file__).parent.parent / "scenarios"


class TestScenarioLoading:
    def test_canonical_loads(self):
        sc = load_scenario_file(SCENARIOS / "canonical.yaml")
        assert sc.seed == 42
        assert [r.request.id for r in sc.requests] == ["req-clean", "req-nacked"]
        assert sc.faults[0]["type"] == "verification_failure"
        graph = sc.load_graph()
        assert "eps-1" in graph.nodes

    def test_yaml_exponent_strings_are_coerced(self):
        sc = load_scenario_file(SCENARIOS / "canonical.yaml")
        assert sc.model_params.eps["eps-1"].pair_rate_hz == pytest.approx(2.0e6)
        assert isinstance(sc.model_params.eps["eps-1"].pair_rate_hz, float)

    def test_unsorted_submits_rejected(self, tmp_path):
        doc = yaml.safe_load((SCENARIOS / "canonical.yaml").read_text())
        doc["requests"][0]["submit_s"] = 99.0
        doc["model_params"] = {}
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(doc))
        with pytest.raises(ScenarioError, match="sorted"):
            load_scenario_file(p)

    def test_unknown_fault_type_rejected(self, tmp_path):
        doc = yaml.safe_load((SCENARIOS / "canonical.yaml").read_text())
        doc["faults"] = [{"type": "alien"}]
        doc["model_params"] = {}
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(doc))
        with pytest.raises(ScenarioError, match="unknown type"):
            load_scenario_file(p)

    def test_missing_topology_file(self, tmp_path):
        doc = {"topology": "nope.yaml", "requests": []}
        p = tmp_path / "s.yaml"
        p.write_text(yaml.safe_dump(doc))
        sc = load_scenario_file(p)
        with pytest.raises(ScenarioError, match="not found"):
            sc.load_graph()


class TestRunner:
    def test_canonical_run_outputs(self, tmp_path):
        sc = load_scenario_file(SCENARIOS / "canonical.yaml")
        code = run_scenario(sc, tmp_path / "out")
        assert code == 0
        out = tmp_path / "out"
        assert (out / "trace.ndjson").exists()
        records = read_results(out / "results.ndjson")
        assert {r.request_id: r.final_state for r in records} == {
            "req-clean": "stored", "req-nacked": "stored"}
        nacked = next(r for r in records if r.request_id == "req-nacked")
        assert nacked.verify_attempts == 2
        assert nacked.establish_attempts == 2
        summary = json.loads((out / "summary.json").read_text())
        assert summary["resource_accounting"] == "clean"
        assert summary["by_state"] == {"stored": 2}

    def test_determinism_byte_for_byte(self, tmp_path):
        sc = load_scenario_file(SCENARIOS / "canonical.yaml")
        run_scenario(sc, tmp_path / "a")
        sc2 = load_scenario_file(SCENARIOS / "canonical.yaml")
        run_scenario(sc2, tmp_path / "b")
        for name in ("trace.ndjson", "results.ndjson", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes(), name

    def test_seed_override_changes_trace(self, tmp_path):
        sc = load_scenario_file(SCENARIOS / "canonical.yaml")
        run_scenario(sc, tmp_path / "a")
        sc2 = load_scenario_file(SCENARIOS / "canonical.yaml")
        run_scenario(sc2, tmp_path / "b", seed_override=43)
        assert (tmp_path / "a" / "trace.ndjson").read_bytes() != \
            (tmp_path / "b" / "trace.ndjson").read_bytes()

    def test_empty_request_list_exits_zero(self, tmp_path):
        sc = load_scenario_file(SCENARIOS / "coexistence.yaml")
        code = run_scenario(sc, tmp_path / "out")
        assert code == 0
        assert read_results(tmp_path / "out" / "results.ndjson") == []
        assert (tmp_path / "out" / "coexistence.csv").exists()

    def test_result_round_trip_identity(self, tmp_path):
        sc = load_scenario_file(SCENARIOS / "canonical.yaml")
        run_scenario(sc, tmp_path / "out")
        records = read_results(tmp_path / "out" / "results.ndjson")
        for rec in records:
            again = ResultRecord.from_dict(json.loads(rec.to_json()))
            assert again.to_dict() == rec.to_dict()


class TestSweep:
    def test_sweep_reproduces_calibration_point(self):
        sc = load_scenario_file(SCENARIOS / "coexistence.yaml")
        rows = sweep_coexistence(sc, [6.8])
        assert rows[0]["visibility_hv"] == pytest.approx(0.77, abs=1e-9)

    def test_sweep_monotone_and_crosses_once(self):
        sc = load_scenario_file(SCENARIOS / "coexistence.yaml")
        powers = [0.0, 2.0, 4.0, 6.8, 8.0, 9.0, 10.0, 12.0]
        rows = sweep_coexistence(sc, powers)
        vis = [r["visibility_hv"] for r in rows]
        assert all(b < a for a, b in zip(vis, vis[1:]))
        flags = [r["nonclassical"] for r in rows]
        assert flags[0] and not flags[-1]
        assert sum(1 for a, b in zip(flags, flags[1:]) if a != b) == 1


class TestCli:
    def test_validate_topology(self, capsys):
        code = cli_main(["validate", str(SCENARIOS / "topologies/metro_testbed.yaml")])
        assert code == 0
        assert "topology with 4 node(s)" in capsys.readouterr().out

    def test_validate_scenario(self, capsys):
        code = cli_main(["validate", str(SCENARIOS / "canonical.yaml")])
        assert code == 0

    def test_validate_garbage_exits_2(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text("nodes: [{id: x}]")
        assert cli_main(["validate", str(p)]) == 2

    def test_run_and_report(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli_main(["run", str(SCENARIOS / "canonical.yaml"),
                         "--out", str(out)])
        assert code == 0
        code = cli_main(["report", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        assert "req-clean" in text and "stored" in text

    def test_unparsable_scenario_exits_2(self, tmp_path, capsys):
        p = tmp_path / "nope.yaml"
        p.write_text("{{{{")
        assert cli_main(["run", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_sweep_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = cli_main(["sweep-coexistence", str(SCENARIOS / "coexistence.yaml"),
                         "--powers", "0,6.8", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("launch_power_dbm,visibility_hv")
        assert len(lines) == 3


class TestSummaries:
    def test_blocking_probability(self):
        fake = [
            ResultRecord(request_id="a", requester="x", final_state="stored",
                         ebits_delivered=10, target_ebits=10, eps_id="e",
                         lightpaths={}, establish_attempts=1, verify_attempts=1,
                         recalibrations=0, rejection_reason=None,
                         failure_reason=None, fidelity_estimate=None,
                         virtual_duration_s=5.0),
            ResultRecord(request_id="b", requester="x", final_state="blocked",
                         ebits_delivered=0, target_ebits=10, eps_id=None,
                         lightpaths={}, establish_attempts=3, verify_attempts=0,
                         recalibrations=0, rejection_reason=None,
                         failure_reason=None, fidelity_estimate=None,
                         virtual_duration_s=1.0),
        ]
        s = summarize(fake)
        assert s["blocking_probability"] == 0.5
        assert s["mean_time_to_stored_s"] == 5.0
