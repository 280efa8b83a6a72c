"""Headless scenario execution and the coexistence model sweep."""

from __future__ import annotations

import json
import platform
import time
from dataclasses import replace
from pathlib import Path

from ..controlplane.messages import RequestState
from ..photonics import (
    ChannelModel,
    EpsModel,
    calibrate_raman,
    classify_nonclassical,
    dbm_to_mw,
    singles_and_coincidences,
    visibility_from_rates,
    VisibilityClass,
)
from .results import ResultRecord, summarize, write_results
from .scenario import Scenario, ScenarioError, build_scenario_system, \
    schedule_scenario_requests


def run_scenario(scenario: Scenario, out_dir, seed_override: int | None = None) -> int:
    """Run to quiescence; write trace, results, summary, and a wall-clock
    sidecar. Exit code 0 unless a request ended in the failed state."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wall_start = time.time()

    system = build_scenario_system(scenario, seed_override=seed_override)
    schedule_scenario_requests(system, scenario)
    system.engine.run_until()

    system.engine.trace.write_ndjson(out / "trace.ndjson")
    records = [ResultRecord.from_record(rec)
               for _, rec in sorted(system.controller.records.items())]
    write_results(records, out / "results.ndjson")

    summary = summarize(records)
    summary["seed"] = scenario.seed if seed_override is None else seed_override
    summary["virtual_end_ns"] = system.engine.now_ns
    ok, accounting = system.controller.quiescent_accounting_ok()
    summary["resource_accounting"] = accounting if not ok else "clean"
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if scenario.coexistence_sweep:
        rows = sweep_coexistence(scenario, scenario.coexistence_sweep)
        _write_sweep_csv(rows, out / "coexistence.csv")

    # Wall-clock facts live in a sidecar so the primary outputs stay
    # byte-reproducible.
    meta = {
        "wall_seconds": time.time() - wall_start,
        "platform": platform.platform(),
        "scenario": str(scenario.source_path) if scenario.source_path else None,
        "events_processed": system.engine.stats["processed"],
    }
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    failed = any(r.final_state == RequestState.FAILED.value for r in records)
    return 1 if failed else 0


def _coexistence_models(scenario: Scenario):
    exp = scenario.coexistence_experiment
    if not exp:
        raise ScenarioError("scenario has no coexistence_experiment section")
    v0 = exp.get("v0", {})
    eps = EpsModel(pair_rate_hz=float(exp.get("pair_rate_hz", 1e7)),
                   intrinsic_visibility=float(v0.get("hv", 0.90)),
                   basis_visibility={k: float(v) for k, v in v0.items()})
    remote = ChannelModel(
        transmittance=10.0 ** (-(float(exp["fiber_length_km"])
                                 * float(exp["attenuation_db_per_km"])) / 10.0),
        detector_efficiency=float(exp.get("detector_efficiency", 0.3)),
        dark_rate_hz=float(exp.get("dark_rate_hz", 100.0)),
        filter_bw_ghz=float(exp.get("filter_bw_ghz", 100.0)),
        coincidence_window_s=float(exp.get("coincidence_window_s", 0.5e-9)),
        fiber_length_km=float(exp["fiber_length_km"]),
        attenuation_db_per_km=float(exp["attenuation_db_per_km"]))
    local_raw = exp.get("local_arm", {})
    local = ChannelModel(
        transmittance=float(local_raw.get("transmittance", 1.0)),
        detector_efficiency=float(local_raw.get("detector_efficiency",
                                                remote.detector_efficiency)),
        dark_rate_hz=float(local_raw.get("dark_rate_hz", remote.dark_rate_hz)),
        filter_bw_ghz=remote.filter_bw_ghz,
        coincidence_window_s=remote.coincidence_window_s)
    calpoint = exp.get("calibration_point")
    if not calpoint:
        raise ScenarioError("coexistence_experiment needs a calibration_point")
    coeff = calibrate_raman(
        [(dbm_to_mw(float(calpoint["power_dbm"])),
          float(calpoint["visibility_hv"]))],
        eps, remote, local, metric="visibility")
    return eps, replace(remote, raman_coeff=coeff), local, coeff


def sweep_coexistence(scenario: Scenario, powers_dbm: list[float]) -> list[dict]:
    """Predicted visibility vs classical launch power, after calibrating
    the noise coefficient at the scenario's single calibration point."""
    eps, remote, local, coeff = _coexistence_models(scenario)
    rows = []
    for dbm in powers_dbm:
        ch = replace(remote, classical_power_mw=dbm_to_mw(dbm))
        stats = singles_and_coincidences(eps, ch, local)
        vis_by_basis = {}
        for basis in sorted(eps.basis_visibility) or ["hv"]:
            vis_by_basis[basis] = visibility_from_rates(
                stats.coincidences_hz, stats.accidentals_hz,
                eps.visibility_for_basis(basis))
        v_hv = vis_by_basis.get("hv", stats.visibility)
        rows.append({
            "launch_power_dbm": dbm,
            "visibility_hv": v_hv,
            "visibility_da": vis_by_basis.get("da", v_hv),
            "car": stats.car,
            "nonclassical": classify_nonclassical(
                min(v_hv, 1.0)) == VisibilityClass.NON_CLASSICAL,
            "raman_coeff": coeff,
        })
    return rows


def _write_sweep_csv(rows: list[dict], path) -> None:
    cols = ["launch_power_dbm", "visibility_hv", "visibility_da", "car",
            "nonclassical", "raman_coeff"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row[c]) for c in cols) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)
