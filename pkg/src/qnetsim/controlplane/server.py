"""The network controller: resource registry, topology verification,
request lifecycle orchestration, and resource accounting.

All state mutation happens in bus-message handlers on the event loop
(single writer). Request progress is driven by explicit state-machine
steps; every transition is announced on the request's control topic so
the trace is a complete protocol record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..rwa import (
    Lightpath,
    RwaConstraints,
    WavelengthPolicy,
    find_and_sort_paths,
    release,
    route_to_bsm,
    sp_rwa,
)
from ..simkernel import BusMessage, Engine, Event, MessageBus, s_to_ns
from ..topology import Band, NetworkGraph, NodeKind
from .messages import Kind, RequestState, Topics
from .records import (
    EntanglementRequest,
    QubitType,
    RegistryEntry,
    RequestRecord,
    ResourceRegistration,
    ServiceType,
)
from .world import PhysicsWorld

SERVER_ID = "server"
SDN_AGENT_ID = "sdn-agent"


@dataclass
class ControlPlaneConfig:
    quantum_band: Band = Band.O_BAND
    k_paths: int = 4
    max_loss_db: float | None = None
    sync_channel_label: str = "C32"
    verify_threshold: float = 1.0 / 6.0
    verify_integration_s: float = 1.0
    classical_probe_s: float = 0.2
    max_establish_attempts: int = 3
    establish_backoff_s: float = 1.0
    max_verify_attempts: int = 3
    duty_cycle_s: float = 0.0
    batch_interval_s: float = 1.0
    recal_visibility_threshold: float = 1.0 / math.sqrt(2.0)
    max_recalibrations: int = 8
    response_timeout_s: float = 600.0
    delay_span: int = 48
    confirm_counts: int = 10


def _lp_payload(lp: Lightpath) -> dict:
    return {
        "id": lp.id,
        "link_ids": list(lp.link_ids),
        "channel": lp.channel.label,
        "total_loss_db": lp.total_loss_db,
        "endpoints": list(lp.endpoints),
    }


@dataclass
class _LiveRequest:
    """Controller-side working state beyond the durable record."""

    record: RequestRecord
    lightpaths: dict[str, Lightpath] = field(default_factory=dict)
    pending_verifications: set[str] = field(default_factory=set)
    verification_failed: bool = False
    pending_calibrations: set[str] = field(default_factory=set)
    ready_expected: set[str] = field(default_factory=set)
    ready_seen: set[str] = field(default_factory=set)
    ends_seen: set[str] = field(default_factory=set)
    duty_timer: Event | None = None
    deadline_timer: Event | None = None
    timeout_timers: dict[str, Event] = field(default_factory=dict)
    recalibrating: bool = False
    delay_dispatched: bool = False


class NetworkController:
    def __init__(self, engine: Engine, bus: MessageBus, graph: NetworkGraph,
                 world: PhysicsWorld, config: ControlPlaneConfig | None = None):
        self.engine = engine
        self.bus = bus
        self.graph = graph
        self.world = world
        self.config = config or ControlPlaneConfig()
        self.registry: dict[str, RegistryEntry] = {}
        self.records: dict[str, RequestRecord] = {}
        self.live: dict[str, _LiveRequest] = {}
        self.eps_allocations: dict[str, set[str]] = {}
        self.stored_order: list[str] = []
        self._req_seq = 0
        self._idempotency: dict[str, str] = {}
        bus.subscribe(Topics.REGISTER, self._on_register)
        bus.subscribe(Topics.TOPOLOGY, self._on_topology)
        bus.subscribe("qnet/request/#", self._on_request_msg)
        bus.subscribe("qnet/cal/+", self._on_cal_msg)

    # -- helpers -----------------------------------------------------------

    def _publish(self, topic: str, kind: str, payload: dict,
                 correlation_id: str) -> None:
        rec = self.bus.publish(topic, sender=SERVER_ID, kind=kind,
                               payload=payload, correlation_id=correlation_id)
        record = self.records.get(correlation_id)
        if record is not None:
            record.trace_seqs.append(rec.seq)

    def _enter(self, live: _LiveRequest, state: RequestState,
               extra: dict | None = None) -> None:
        rec = live.record
        rec.enter(self.engine.now_ns, state)
        payload = {"state": state.value}
        if extra:
            payload.update(extra)
        self._publish(Topics.request_ctl(rec.id), Kind.STATE, payload, rec.id)
        if state in (RequestState.STORED,):
            rec.assert_protocol_order()

    def _arm_timeout(self, live: _LiveRequest, key: str, seconds: float,
                     on_timeout) -> None:
        self._disarm_timeout(live, key)
        live.timeout_timers[key] = self.engine.schedule_after(
            s_to_ns(seconds), lambda ev: on_timeout())

    def _disarm_timeout(self, live: _LiveRequest, key: str) -> None:
        timer = live.timeout_timers.pop(key, None)
        if timer is not None:
            timer.cancel("answered")

    # -- discovery ----------------------------------------------------------

    def _on_register(self, msg: BusMessage) -> None:
        if msg.kind != Kind.REGISTER:
            return
        reg = ResourceRegistration(
            resource_id=msg.payload["resource_id"],
            kind=msg.payload["kind"],
            features=msg.payload.get("features", {}),
            connectivity_claims=msg.payload.get("connectivity_claims", []))
        entry = self.registry.get(reg.resource_id)
        if entry is None:
            entry = RegistryEntry(registration=reg)
            self.registry[reg.resource_id] = entry
        else:
            entry.registration = reg
            entry.online = True
        # Ask the SDN agent for the passive topology, then cross-verify
        # this resource's connectivity claims against it.
        self._publish(Topics.TOPOLOGY, Kind.TOPOLOGY_QUERY,
                      {"to": SDN_AGENT_ID, "query_id": reg.resource_id},
                      "discovery")
        self._publish(Topics.TOPOLOGY, Kind.VERIFY_CLAIMS,
                      {"to": SDN_AGENT_ID, "resource": reg.resource_id,
                       "claims": reg.connectivity_claims},
                      "discovery")

    def _on_topology(self, msg: BusMessage) -> None:
        self._note_incoming(msg)
        if msg.kind == Kind.CLAIMS_VERIFIED:
            resource = msg.payload["resource"]
            entry = self.registry.get(resource)
            if entry is None:
                return
            bad = [v for v in msg.payload["verdicts"] if not v["ok"]]
            entry.verified = not bad
            entry.quarantined = bool(bad)
            self._publish(Topics.TOPOLOGY, Kind.RESOURCE_STATUS,
                          {"resource": resource,
                           "schedulable": entry.schedulable,
                           "quarantined": entry.quarantined,
                           "problems": bad},
                          "discovery")
        elif msg.kind in (Kind.ACK, Kind.NACK) and \
                msg.payload.get("op") == Kind.ESTABLISH_PATHS:
            rid = msg.correlation_id
            live = self.live.get(rid)
            if live is None:
                return
            self._disarm_timeout(live, "sdn")
            if msg.payload.get("action") == "remove":
                return
            if msg.kind == Kind.ACK:
                self._paths_ready(live)
            else:
                self._release_all(live)
                self._retry_or_block(live, reason=msg.payload.get("reason", "sdn nack"))

    # -- request intake -------------------------------------------------------

    def submit(self, request: EntanglementRequest,
               idempotency_key: str | None = None) -> str:
        """Entry point for the gateway; safe to call from handlers."""
        if idempotency_key and idempotency_key in self._idempotency:
            return self._idempotency[idempotency_key]
        if request.id in self.records:
            raise ValueError(f"duplicate request id {request.id}")
        if idempotency_key:
            self._idempotency[idempotency_key] = request.id
        record = RequestRecord(request=request)
        self.records[request.id] = record
        live = _LiveRequest(record=record)
        self.live[request.id] = live
        self._publish(Topics.request_ctl(request.id), Kind.SUBMIT,
                      {"to": SERVER_ID, **request.to_payload()}, request.id)
        record.enter(self.engine.now_ns, RequestState.RECEIVED)
        self._publish(Topics.request_ctl(request.id), Kind.STATE,
                      {"state": RequestState.RECEIVED.value}, request.id)
        self.engine.schedule_after(0, lambda ev: self._select_eps(live))
        return request.id

    def next_request_id(self) -> str:
        rid = f"req-{self._req_seq}"
        self._req_seq += 1
        return rid

    # -- EPS selection (protocol step 2) ---------------------------------------

    def _schedulable(self, resource_id: str) -> bool:
        entry = self.registry.get(resource_id)
        return entry is not None and entry.schedulable

    def _reject(self, live: _LiveRequest, reason: str) -> None:
        live.record.rejection_reason = reason
        self._enter(live, RequestState.REJECTED, {"reason": reason})
        self._publish(Topics.request_ctl(live.record.id), Kind.REJECT,
                      {"to": live.record.request.requester, "reason": reason},
                      live.record.id)
        self.live.pop(live.record.id, None)

    def _quantum_constraints(self) -> RwaConstraints:
        return RwaConstraints(required_band=self.config.quantum_band,
                              max_loss_db=self.config.max_loss_db,
                              k_paths=self.config.k_paths)

    def _sync_constraints(self) -> RwaConstraints:
        labels = [ch.label for ch in self.graph.grid]
        if self.config.sync_channel_label in labels:
            return RwaConstraints(k_paths=self.config.k_paths,
                                  wavelength_policy=WavelengthPolicy.EXPLICIT,
                                  preferred_channels=[self.config.sync_channel_label])
        c_band = [ch.label for ch in self.graph.grid if ch.band == Band.C_BAND]
        if c_band:
            return RwaConstraints(required_band=Band.C_BAND,
                                  k_paths=self.config.k_paths)
        return RwaConstraints(k_paths=self.config.k_paths)

    def _select_eps(self, live: _LiveRequest) -> None:
        rec = live.record
        req = rec.request
        for node_id in req.node_pair:
            if not self._schedulable(node_id):
                self._reject(live, f"node {node_id} not schedulable")
                return
        eps_entries = [e for e in self.registry.values()
                       if e.registration.kind == NodeKind.EPS.value and e.schedulable]
        if not eps_entries:
            self._reject(live, "no_capable_eps")
            return
        capable = [e for e in eps_entries
                   if req.qubit_type.value in e.registration.features.get(
                       "qubit_types", [])]
        if not capable:
            self._reject(live, "no_capable_eps")
            return
        with_capacity = []
        for e in capable:
            eps_id = e.registration.resource_id
            allocated = len(self.eps_allocations.get(eps_id, set()))
            if allocated < self.graph.node(eps_id).max_user_pairs:
                with_capacity.append(e)
        if not with_capacity:
            self._reject(live, "no_capacity")
            return
        constraints = self._quantum_constraints()
        ranked = []
        for e in with_capacity:
            eps_id = e.registration.resource_id
            legs = []
            feasible = True
            for node_id in req.node_pair:
                paths = find_and_sort_paths(self.graph, eps_id, node_id, constraints)
                if not paths:
                    feasible = False
                    break
                best = paths[0]
                legs.append((len(best), self.graph.path_metric(
                    eps_id, best, self.graph.grid[0])))
            if not feasible:
                continue
            hops = sum(l[0] for l in legs)
            loss = sum(l[1] for l in legs)
            ranked.append(((hops, loss, eps_id), eps_id))
        if not ranked:
            self._reject(live, "no_feasible_paths")
            return
        ranked.sort()
        eps_id = ranked[0][1]
        if req.service == ServiceType.TELEPORTATION:
            bsm_id = self._select_bsm(req)
            if bsm_id is None:
                self._reject(live, "no_capable_bsm")
                return
            rec.bsm_id = bsm_id
        rec.eps_id = eps_id
        self.eps_allocations.setdefault(eps_id, set()).add(rec.id)
        self._enter(live, RequestState.EPS_SELECTED, {"eps_id": eps_id})
        self.engine.schedule_after(0, lambda ev: self._establish(live))

    def _select_bsm(self, req: EntanglementRequest) -> str | None:
        candidates = []
        for e in self.registry.values():
            if e.registration.kind != NodeKind.BSM.value or not e.schedulable:
                continue
            bsm_id = e.registration.resource_id
            constraints = self._quantum_constraints()
            hops = 0
            ok = True
            for node_id in req.node_pair:
                paths = find_and_sort_paths(self.graph, node_id, bsm_id, constraints)
                if not paths:
                    ok = False
                    break
                hops += len(paths[0])
            if ok:
                candidates.append((hops, bsm_id))
        if not candidates:
            return None
        candidates.sort()
        return candidates[0][1]

    # -- path establishment (protocol steps 3-4) -------------------------------

    def _establish(self, live: _LiveRequest) -> None:
        rec = live.record
        req = rec.request
        rec.establish_attempts += 1
        constraints = self._quantum_constraints()
        reserved: list[Lightpath] = []

        def fail(reason: str) -> None:
            for lp in reversed(reserved):
                release(self.graph, lp)
            self._retry_or_block(live, reason)

        lightpaths: dict[str, Lightpath] = {}
        for i, node_id in enumerate(req.node_pair, start=1):
            lp = sp_rwa(self.graph, rec.eps_id, node_id, constraints,
                        lightpath_id=f"{rec.id}-q{i}-a{rec.establish_attempts}")
            if lp is None:
                fail(f"no quantum lightpath to {node_id}")
                return
            reserved.append(lp)
            lightpaths[f"quantum:{node_id}"] = lp
        lp_sync = sp_rwa(self.graph, req.node_pair[0], req.node_pair[1],
                         self._sync_constraints(),
                         lightpath_id=f"{rec.id}-sync-a{rec.establish_attempts}")
        if lp_sync is None:
            fail("no sync lightpath")
            return
        reserved.append(lp_sync)
        lightpaths["sync"] = lp_sync
        if req.service == ServiceType.TELEPORTATION:
            pair = route_to_bsm(self.graph, req.node_pair[0], req.node_pair[1],
                                rec.bsm_id, constraints,
                                id_prefix=f"{rec.id}-bsm-a{rec.establish_attempts}")
            if pair is None:
                fail("no BSM lightpaths")
                return
            reserved.extend(pair)
            lightpaths[f"bsm:{req.node_pair[0]}"] = pair[0]
            lightpaths[f"bsm:{req.node_pair[1]}"] = pair[1]

        live.lightpaths = lightpaths
        rec.lightpath_ids = {k: lp.id for k, lp in lightpaths.items()}
        # Install switch rules before telling anyone the paths exist.
        self._publish(Topics.TOPOLOGY, Kind.ESTABLISH_PATHS,
                      {"to": SDN_AGENT_ID, "action": "install",
                       "lightpaths": [_lp_payload(lp) for lp in
                                      lightpaths.values()]},
                      rec.id)
        self._arm_timeout(live, "sdn", self.config.response_timeout_s,
                          lambda: self._sdn_timeout(live))

    def _sdn_timeout(self, live: _LiveRequest) -> None:
        self._release_all(live)
        self._fail(live, "sdn agent unresponsive")

    def _retry_or_block(self, live: _LiveRequest, reason: str) -> None:
        rec = live.record
        if rec.establish_attempts >= self.config.max_establish_attempts:
            self._free_eps(live)
            self._enter(live, RequestState.BLOCKED, {"reason": reason})
            self.live.pop(rec.id, None)
            return
        backoff = self.config.establish_backoff_s * (
            2.0 ** (rec.establish_attempts - 1))
        self.engine.schedule_after(s_to_ns(backoff),
                                   lambda ev: self._establish(live))

    def _paths_ready(self, live: _LiveRequest) -> None:
        rec = live.record
        req = rec.request
        self._enter(live, RequestState.PATHS_ESTABLISHED,
                    {"lightpaths": {k: _lp_payload(lp)
                                    for k, lp in sorted(live.lightpaths.items())},
                     "attempt": rec.establish_attempts})
        setup_payload = {
            "eps_id": rec.eps_id,
            "node_pair": list(req.node_pair),
            "basis": req.calibration_basis,
            "target_ebits": req.target_ebits,
            "tally_owner": req.node_pair[0],
            "lightpaths": {k: _lp_payload(lp)
                           for k, lp in sorted(live.lightpaths.items())},
        }
        for entity in [rec.eps_id, *req.node_pair]:
            self._publish(Topics.request_ctl(rec.id), Kind.PATHS_ESTABLISHED,
                          {"to": entity, **setup_payload}, rec.id)
        self.engine.schedule_after(0, lambda ev: self._verify(live))

    # -- path verification (protocol step 5) -------------------------------------

    def _verify(self, live: _LiveRequest) -> None:
        rec = live.record
        rec.verify_attempts += 1
        live.pending_verifications = set()
        live.verification_failed = False
        for node_id in rec.request.node_pair:
            lp = live.lightpaths[f"quantum:{node_id}"]
            live.pending_verifications.add(lp.id)
            self._publish(Topics.request_ctl(rec.id), Kind.VERIFY_PATH,
                          {"to": node_id,
                           "eps_id": rec.eps_id,
                           "lightpath": _lp_payload(lp),
                           "threshold": self.config.verify_threshold,
                           "integration_s": self.config.verify_integration_s,
                           "classical_probe_s": self.config.classical_probe_s,
                           "attempt": rec.verify_attempts},
                          rec.id)
        self._arm_timeout(live, "verify", self.config.response_timeout_s,
                          lambda: self._verify_timeout(live))

    def _verify_timeout(self, live: _LiveRequest) -> None:
        # Probe timed out: treat like a NACK and go back to establishment.
        self._release_all(live)
        if live.record.verify_attempts >= self.config.max_verify_attempts:
            self._fail(live, "verification probe timeout")
        else:
            self._retry_or_block(live, "verification probe timeout")

    def _on_verification_result(self, live: _LiveRequest, msg: BusMessage) -> None:
        rec = live.record
        result = {k: v for k, v in msg.payload.items() if k != "to"}
        result["node"] = msg.sender
        result["attempt"] = rec.verify_attempts
        rec.verification_results.append(result)
        lp_id = msg.payload["lightpath_id"]
        live.pending_verifications.discard(lp_id)
        if not msg.payload["passed"]:
            live.verification_failed = True
        if live.pending_verifications:
            return
        self._disarm_timeout(live, "verify")
        if live.verification_failed:
            # NACK path: tear everything down and return to step 3.
            self._release_all(live)
            if rec.verify_attempts >= self.config.max_verify_attempts:
                self._fail(live, "path verification failed repeatedly")
            else:
                self.engine.schedule_after(0, lambda ev: self._establish(live))
            return
        self._enter(live, RequestState.PATHS_VERIFIED)
        self.engine.schedule_after(0, lambda ev: self._calibrate(live))

    # -- calibration (protocol step 6) ---------------------------------------------

    def _calibrate(self, live: _LiveRequest) -> None:
        rec = live.record
        req = rec.request
        self._enter(live, RequestState.CALIBRATING,
                    {"recalibration": live.recalibrating})
        self.world.pair_channels(rec.id, rec.eps_id, live.lightpaths,
                                 req.node_pair)
        live.pending_calibrations = set()
        live.ready_seen = set()
        live.ready_expected = {rec.eps_id, *req.node_pair}
        if req.service == ServiceType.TELEPORTATION:
            live.ready_expected.add(rec.bsm_id)
        procedure = ("polarization" if req.qubit_type == QubitType.POLARIZATION
                     else "timebin")
        n1, n2 = req.node_pair
        live.delay_dispatched = False
        # The EPS multiplexes alignment light in; each node aligns its
        # analyzers; the tally owner then runs the correlation-delay
        # search over the sync channel once both analyzers are aligned.
        # On re-calibration the delay is already known and is skipped.
        self._publish(Topics.cal(rec.eps_id), Kind.CALIBRATE,
                      {"to": rec.eps_id, "procedure": "send_alignment",
                       "basis": req.calibration_basis, "then_ready": True},
                      rec.id)
        live.pending_calibrations.add((rec.eps_id, "send_alignment"))
        for node_id, then_ready in ((n1, live.recalibrating), (n2, True)):
            self._publish(Topics.cal(node_id), Kind.CALIBRATE,
                          {"to": node_id, "procedure": procedure,
                           "eps_id": rec.eps_id,
                           "basis": req.calibration_basis,
                           "then_ready": then_ready},
                          rec.id)
            live.pending_calibrations.add((node_id, procedure))
        if req.service == ServiceType.TELEPORTATION:
            self._publish(Topics.cal(rec.bsm_id), Kind.CALIBRATE,
                          {"to": rec.bsm_id, "procedure": "hom_scan",
                           "eps_id": rec.eps_id, "then_ready": True},
                          rec.id)
            live.pending_calibrations.add((rec.bsm_id, "hom_scan"))
        self._arm_timeout(live, "calibrate", self.config.response_timeout_s,
                          lambda: self._fail(live, "calibration timeout"))

    def _on_calibration_done(self, live: _LiveRequest, msg: BusMessage) -> None:
        rec = live.record
        report = {k: v for k, v in msg.payload.items() if k != "to"}
        report["t_ns"] = msg.t_ns
        rec.calibration_reports.append(report)
        procedure = msg.payload["procedure"]
        live.pending_calibrations.discard((msg.sender, procedure))
        if procedure == "hom_scan":
            from ..calibration import swap_fidelity_estimate
            rec.fidelity_estimate = swap_fidelity_estimate(
                msg.payload["report"]["fitted_visibility"])
        basis_pending = any(p[1] in ("polarization", "timebin")
                            for p in live.pending_calibrations)
        if (procedure in ("polarization", "timebin") and not basis_pending
                and not live.recalibrating and not live.delay_dispatched):
            # Both analyzers aligned: the tally owner runs the joint
            # correlation-delay search over the sync channel.
            live.delay_dispatched = True
            n1 = rec.request.node_pair[0]
            self._publish(Topics.cal(n1), Kind.CALIBRATE,
                          {"to": n1, "procedure": "correlation_delay",
                           "eps_id": rec.eps_id,
                           "node_pair": list(rec.request.node_pair),
                           "delay_span": self.config.delay_span,
                           "confirm_counts": self.config.confirm_counts,
                           "then_ready": True},
                          rec.id)
            live.pending_calibrations.add((n1, "correlation_delay"))
        if not live.pending_calibrations:
            self._disarm_timeout(live, "calibrate")

    def _on_cal_nack(self, live: _LiveRequest, msg: BusMessage) -> None:
        self._disarm_timeout(live, "calibrate")
        self._fail(live, f"calibration failed at {msg.sender}: "
                         f"{msg.payload.get('reason', 'unknown')}")

    # -- readiness and start (protocol steps 7-8) ------------------------------------

    def _on_ready(self, live: _LiveRequest, msg: BusMessage) -> None:
        live.ready_seen.add(msg.sender)
        self._maybe_ready(live)

    def _maybe_ready(self, live: _LiveRequest) -> None:
        if live.record.state != RequestState.CALIBRATING:
            return
        if not live.ready_expected.issubset(live.ready_seen):
            return
        self._enter(live, RequestState.READY)
        self.engine.schedule_after(0, lambda ev: self._start(live))

    def _start(self, live: _LiveRequest) -> None:
        rec = live.record
        self._publish(Topics.request_ctl(rec.id), Kind.START,
                      {"to": rec.eps_id}, rec.id)
        was_recal = live.recalibrating
        live.recalibrating = False
        self._enter(live, RequestState.DISTRIBUTING)
        if set(rec.request.node_pair).issubset(live.ends_seen):
            # Target was reached right as a re-calibration kicked off.
            self._finish_distribution(live)
            return
        if was_recal:
            # Nodes paused their tally during re-calibration; resume it.
            self.engine.schedule_after(0, lambda ev: self._resume_nodes(live))
        if self.config.duty_cycle_s > 0:
            live.duty_timer = self.engine.schedule_after(
                s_to_ns(self.config.duty_cycle_s),
                lambda ev: self._duty_cycle(live))
        if live.deadline_timer is None:
            remaining = max(rec.request.end_time_s - self.engine.now_ns / 1e9, 0.0)
            live.deadline_timer = self.engine.schedule_after(
                s_to_ns(remaining), lambda ev: self._deadline(live))

    def _resume_nodes(self, live: _LiveRequest) -> None:
        # In-process hand-off; the START message is already on the trace.
        for agent in getattr(self, "node_agents", []):
            agent.resume(live.record.id)

    # -- distribution (protocol steps 9-12) ----------------------------------------

    def _on_batch(self, live: _LiveRequest, msg: BusMessage) -> None:
        rec = live.record
        if rec.state != RequestState.DISTRIBUTING:
            return  # never accept batches outside distribution
        batch = {k: v for k, v in msg.payload.items() if k != "to"}
        batch["t_ns"] = msg.t_ns
        rec.batches.append(batch)
        rec.ebits_delivered = max(rec.ebits_delivered,
                                  int(msg.payload.get("ebits_total", 0)))
        vis = msg.payload.get("visibility")
        if (vis is not None
                and vis < self.config.recal_visibility_threshold
                and rec.recalibrations < self.config.max_recalibrations):
            self._trigger_recalibration(live, reason="visibility below bound")

    def _duty_cycle(self, live: _LiveRequest) -> None:
        if live.record.state == RequestState.DISTRIBUTING:
            self._trigger_recalibration(live, reason="duty cycle")

    def _trigger_recalibration(self, live: _LiveRequest, reason: str) -> None:
        rec = live.record
        if rec.state != RequestState.DISTRIBUTING or live.recalibrating:
            return
        rec.recalibrations += 1
        live.recalibrating = True
        if live.duty_timer is not None:
            live.duty_timer.cancel("recalibrating")
            live.duty_timer = None
        self._publish(Topics.request_ctl(rec.id), Kind.END,
                      {"to": rec.eps_id, "reason": f"recalibrate: {reason}"},
                      rec.id)
        self.engine.schedule_after(0, lambda ev: self._calibrate(live))

    def _deadline(self, live: _LiveRequest) -> None:
        if live.record.state == RequestState.DISTRIBUTING:
            live.ends_seen.add("deadline")
            self._finish_distribution(live)

    def _on_end(self, live: _LiveRequest, msg: BusMessage) -> None:
        if msg.sender == SERVER_ID:
            return
        live.ends_seen.add(msg.sender)
        both = set(live.record.request.node_pair).issubset(live.ends_seen)
        if both and live.record.state == RequestState.DISTRIBUTING:
            self._finish_distribution(live)

    def _finish_distribution(self, live: _LiveRequest) -> None:
        rec = live.record
        if live.duty_timer is not None:
            live.duty_timer.cancel("ended")
            live.duty_timer = None
        if live.deadline_timer is not None:
            live.deadline_timer.cancel("ended")
            live.deadline_timer = None
        self._enter(live, RequestState.ENDED,
                    {"ebits_delivered": rec.ebits_delivered})
        self._publish(Topics.request_ctl(rec.id), Kind.END,
                      {"to": rec.eps_id, "reason": "target reached"}, rec.id)
        self.engine.schedule_after(0, lambda ev: self._store(live))

    def _store(self, live: _LiveRequest) -> None:
        rec = live.record
        self._release_all(live)
        self._free_eps(live)
        self._publish(Topics.request_ctl(rec.id), Kind.STORE_RESULTS,
                      {"to": SERVER_ID,
                       "ebits_delivered": rec.ebits_delivered,
                       "batches": len(rec.batches),
                       "recalibrations": rec.recalibrations},
                      rec.id)
        self._enter(live, RequestState.STORED)
        self.stored_order.append(rec.id)
        self.world.forget_request(rec.id)
        self.live.pop(rec.id, None)

    # -- failure and cleanup ------------------------------------------------------

    def _fail(self, live: _LiveRequest, reason: str) -> None:
        rec = live.record
        if rec.state in (RequestState.STORED, RequestState.FAILED):
            return
        rec.failure_reason = reason
        self._release_all(live)
        self._free_eps(live)
        for key in list(live.timeout_timers):
            self._disarm_timeout(live, key)
        if live.duty_timer is not None:
            live.duty_timer.cancel("failed")
        if live.deadline_timer is not None:
            live.deadline_timer.cancel("failed")
        self._enter(live, RequestState.FAILED, {"reason": reason})
        self.world.forget_request(rec.id)
        self.live.pop(rec.id, None)

    def _free_eps(self, live: _LiveRequest) -> None:
        rec = live.record
        if rec.eps_id:
            self.eps_allocations.get(rec.eps_id, set()).discard(rec.id)

    def _release_all(self, live: _LiveRequest) -> None:
        if not live.lightpaths:
            return
        payloads = [_lp_payload(lp) for lp in live.lightpaths.values()]
        for lp in live.lightpaths.values():
            if lp.active:
                release(self.graph, lp)
        live.lightpaths = {}
        self._publish(Topics.TOPOLOGY, Kind.ESTABLISH_PATHS,
                      {"to": SDN_AGENT_ID, "action": "remove",
                       "lightpaths": payloads},
                      live.record.id)

    # -- message dispatch -----------------------------------------------------------

    def _note_incoming(self, msg: BusMessage) -> None:
        # Every message lands in exactly one record's log (the server's
        # own publications were logged at publish time).
        record = self.records.get(msg.correlation_id)
        if record is not None and msg.sender != SERVER_ID:
            record.trace_seqs.append(msg.seq)

    def _on_request_msg(self, msg: BusMessage) -> None:
        self._note_incoming(msg)
        live = self.live.get(msg.correlation_id)
        if live is None or msg.sender == SERVER_ID:
            return
        if msg.kind == Kind.VERIFICATION_RESULT:
            self._on_verification_result(live, msg)
        elif msg.kind == Kind.READY:
            self._on_ready(live, msg)
        elif msg.kind == Kind.MEASUREMENT_BATCH:
            self._on_batch(live, msg)
        elif msg.kind == Kind.END:
            self._on_end(live, msg)

    def _on_cal_msg(self, msg: BusMessage) -> None:
        self._note_incoming(msg)
        live = self.live.get(msg.correlation_id)
        if live is None or msg.sender == SERVER_ID:
            return
        if msg.kind == Kind.CALIBRATION_DONE:
            self._on_calibration_done(live, msg)
        elif msg.kind == Kind.NACK:
            self._on_cal_nack(live, msg)

    # -- introspection ----------------------------------------------------------------

    def quiescent_accounting_ok(self) -> tuple[bool, str]:
        """At quiescence every channel must be free and all EPS capacity
        restored; used as a standing invariant check."""
        for link in self.graph.links.values():
            if link.occupancy:
                return False, f"link {link.id} still occupied: {sorted(link.occupancy)}"
        for eps_id, allocs in self.eps_allocations.items():
            if allocs:
                return False, f"eps {eps_id} still allocated to {sorted(allocs)}"
        return True, "clean"

    def status_summary(self) -> dict:
        by_state: dict[str, int] = {}
        for rec in self.records.values():
            by_state[rec.state.value] = by_state.get(rec.state.value, 0) + 1
        return {
            "t_ns": self.engine.now_ns,
            "requests": {k: by_state[k] for k in sorted(by_state)},
            "resources": {
                rid: {"kind": e.registration.kind,
                      "schedulable": e.schedulable,
                      "quarantined": e.quarantined}
                for rid, e in sorted(self.registry.items())
            },
            "occupied_channels": sum(len(l.occupancy)
                                     for l in self.graph.links.values()),
        }
