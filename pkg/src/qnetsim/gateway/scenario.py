"""Scenario documents: everything needed to reproduce a run from files.

A scenario references a topology and a model-parameter document, scripts
request submissions (and optional faults) on the virtual clock, and pins
the root seed. Submission times are clamped to land after the discovery
settle window so resources are registered before the first request.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..controlplane import (
    ControlPlaneConfig,
    CoexistenceParams,
    DetectionChannelParams,
    EntanglementRequest,
    EpsParams,
    ModelParams,
    QubitType,
    ServiceType,
    SimSystem,
    build_system,
)
from ..simkernel import s_to_ns
from ..topology import Band, NetworkGraph, SchemaError, load_topology_file


class ScenarioError(Exception):
    pass


@dataclass
class ScenarioRequest:
    request: EntanglementRequest
    submit_s: float
    idempotency_key: str | None = None


@dataclass
class Scenario:
    topology_path: Path
    model_params: ModelParams
    seed: int = 0
    duty_cycle_s: float = 0.0
    settle_s: float = 1.0
    requests: list[ScenarioRequest] = field(default_factory=list)
    faults: list[dict] = field(default_factory=list)
    coexistence_sweep: list[float] = field(default_factory=list)
    coexistence_experiment: dict = field(default_factory=dict)
    control_overrides: dict = field(default_factory=dict)
    source_path: Path | None = None

    def load_graph(self) -> NetworkGraph:
        try:
            return load_topology_file(self.topology_path)
        except FileNotFoundError:
            raise ScenarioError(f"topology file not found: {self.topology_path}")
        except SchemaError as exc:
            raise ScenarioError(f"topology invalid: {exc}")

    def control_config(self) -> ControlPlaneConfig:
        cfg = ControlPlaneConfig(duty_cycle_s=self.duty_cycle_s)
        for key, value in self.control_overrides.items():
            if not hasattr(cfg, key):
                raise ScenarioError(f"unknown control option {key!r}")
            if key == "quantum_band":
                value = Band(value)
            cfg_type = type(getattr(cfg, key))
            if getattr(cfg, key) is not None and not isinstance(value, cfg_type):
                value = cfg_type(value)
            setattr(cfg, key, value)
        return cfg


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    return mapping[key]


def _coerce_numbers(cls, raw: dict, where: str) -> dict:
    """Apply the dataclass field types to a YAML mapping.

    PyYAML leaves exponents without a sign (e.g. ``2.0e6``) as strings,
    so numeric fields are converted explicitly.
    """
    import dataclasses

    out = {}
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    for key, value in raw.items():
        if key not in types:
            raise ScenarioError(f"{where}: unknown key {key!r}")
        t = types[key]
        try:
            if t == "float":
                value = float(value)
            elif t == "int":
                value = int(value)
            elif key == "basis_visibility":
                value = {str(k): float(v) for k, v in value.items()}
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{where}.{key}: {exc}")
        out[key] = value
    return out


def load_model_params(doc: dict, where: str = "model_params") -> ModelParams:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{where} must be a mapping")
    params = ModelParams()
    for node_id, raw in (doc.get("channels") or {}).items():
        params.channels[str(node_id)] = DetectionChannelParams(
            **_coerce_numbers(DetectionChannelParams, raw,
                              f"{where}.channels.{node_id}"))
    for eps_id, raw in (doc.get("eps") or {}).items():
        params.eps[str(eps_id)] = EpsParams(
            **_coerce_numbers(EpsParams, raw, f"{where}.eps.{eps_id}"))
    coex = doc.get("coexistence")
    if coex:
        params.coexistence = CoexistenceParams(
            classical_power_dbm=coex.get("classical_power_dbm"),
            raman_coeff=float(coex.get("raman_coeff", 0.0)),
            links=list(coex["links"]) if coex.get("links") not in (None, "all")
            else None)
    pol = doc.get("polarization") or {}
    params.drift_rate_rad_per_s = float(pol.get("drift_rate_rad_per_s", 0.0))
    tb = doc.get("timebin") or {}
    params.timebin_early_ps = float(tb.get("early_ps", params.timebin_early_ps))
    params.timebin_late_ps = float(tb.get("late_ps", params.timebin_late_ps))
    params.timebin_jitter_ps = float(tb.get("jitter_ps", params.timebin_jitter_ps))
    return params


def _parse_request(raw: dict, index: int) -> ScenarioRequest:
    where = f"requests[{index}]"
    if not isinstance(raw, dict):
        raise ScenarioError(f"{where} must be a mapping")
    pair = _require(raw, "node_pair", where)
    if not (isinstance(pair, list) and len(pair) == 2):
        raise ScenarioError(f"{where}.node_pair must be a two-element list")
    try:
        request = EntanglementRequest(
            id=str(raw.get("id", f"req-{index}")),
            requester=str(_require(raw, "requester", where)),
            qubit_type=QubitType(str(_require(raw, "qubit_type", where))),
            node_pair=(str(pair[0]), str(pair[1])),
            start_time_s=float(raw.get("start_s", 0.0)),
            end_time_s=float(_require(raw, "end_s", where)),
            calibration_basis=str(raw.get("calibration_basis", "hv")),
            target_ebits=int(raw.get("target_ebits", 1)),
            service=ServiceType(str(raw.get("service", "entanglement"))),
        )
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}")
    return ScenarioRequest(request=request,
                           submit_s=float(raw.get("submit_s", 0.0)),
                           idempotency_key=raw.get("idempotency_key"))


_FAULT_TYPES = {"verification_failure", "departure", "misconfigured_claim",
                "drift_burst"}


def load_scenario(doc: dict, base_dir: Path,
                  source_path: Path | None = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    topo_ref = _require(doc, "topology", "scenario")
    topo_path = (base_dir / topo_ref).resolve()

    model_doc = doc.get("model_params", {})
    if isinstance(model_doc, str):
        model_path = (base_dir / model_doc).resolve()
        try:
            with open(model_path) as fh:
                model_doc = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ScenarioError(f"model_params file not found: {model_path}")
    params = load_model_params(model_doc)

    requests = [_parse_request(r, i) for i, r in enumerate(doc.get("requests") or [])]
    submit_times = [r.submit_s for r in requests]
    if submit_times != sorted(submit_times):
        raise ScenarioError("requests must be sorted by submit_s")
    ids = [r.request.id for r in requests]
    if len(set(ids)) != len(ids):
        raise ScenarioError("request ids must be unique")

    faults = []
    for i, f in enumerate(doc.get("faults") or []):
        if not isinstance(f, dict) or "type" not in f:
            raise ScenarioError(f"faults[{i}] must be a mapping with a type")
        if f["type"] not in _FAULT_TYPES:
            raise ScenarioError(f"faults[{i}]: unknown type {f['type']!r} "
                                f"(known: {sorted(_FAULT_TYPES)})")
        faults.append(dict(f))

    coex_exp = model_doc.get("coexistence_experiment") or {}

    return Scenario(
        topology_path=topo_path,
        model_params=params,
        seed=int(doc.get("seed", 0)),
        duty_cycle_s=float(doc.get("duty_cycle_s", 0.0)),
        settle_s=float(doc.get("settle_s", 1.0)),
        requests=requests,
        faults=faults,
        coexistence_sweep=[float(p) for p in doc.get("coexistence_sweep") or []],
        coexistence_experiment=coex_exp,
        control_overrides=dict(doc.get("control") or {}),
        source_path=source_path,
    )


def load_scenario_file(path) -> Scenario:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except yaml.YAMLError as exc:
        raise ScenarioError(f"unparsable scenario: {exc}")
    return load_scenario(doc, base_dir=path.parent, source_path=path)


def build_scenario_system(scenario: Scenario,
                          seed_override: int | None = None) -> SimSystem:
    """Instantiate engine + control plane with the scenario's faults wired."""
    graph = scenario.load_graph()
    claim_overrides: dict[str, dict[int, str]] = {}
    offline_at: dict[str, float] = {}
    for fault in scenario.faults:
        if fault["type"] == "misconfigured_claim":
            claim_overrides.setdefault(str(fault["resource"]), {})[
                int(fault["port"])] = str(fault["tag"])
        elif fault["type"] == "departure":
            offline_at[str(fault["resource"])] = float(fault["at_s"])
    system = build_system(
        graph, scenario.model_params, scenario.control_config(),
        root_seed=scenario.seed if seed_override is None else seed_override,
        claim_overrides=claim_overrides, offline_at=offline_at)
    for fault in scenario.faults:
        if fault["type"] == "verification_failure":
            system.world.verification_faults[str(fault["request"])] = \
                int(fault.get("failures", 1))
        elif fault["type"] == "drift_burst":
            _schedule_drift_burst(system, fault)
    return system


def _schedule_drift_burst(system: SimSystem, fault: dict) -> None:
    at_s = float(fault.get("at_s", 0.0))
    rate = float(fault["rate_rad_per_s"])

    def apply(ev):
        system.world.params.drift_rate_rad_per_s = rate
        for state in getattr(system.world, "_pol_cache", {}).values():
            state.drift_rate_rad_per_s = rate

    system.engine.schedule_at(s_to_ns(at_s), apply)


def schedule_scenario_requests(system: SimSystem, scenario: Scenario) -> None:
    for sreq in scenario.requests:
        at_s = max(sreq.submit_s, scenario.settle_s)
        system.engine.schedule_at(
            s_to_ns(at_s),
            lambda ev, r=sreq: system.controller.submit(
                r.request, idempotency_key=r.idempotency_key))
