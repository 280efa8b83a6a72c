"""Simulated resource agents: Q-Nodes, pair sources, BSM nodes, switches,
and the SDN agent that owns switch rule tables.

Agents never touch controller state; they answer bus messages, take
virtual time to do their work, and sample the physics world the way an
instrument would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import calibration as cal
from ..rwa import Lightpath
from ..simkernel import BusMessage, Engine, MessageBus, s_to_ns
from ..topology import NetworkGraph, NodeKind
from .messages import Kind, Topics
from .records import ResourceRegistration
from .world import PhysicsWorld


def verification_verdict(click_rate_hz: float, noise_rate_hz: float,
                         expected_rate_hz: float, integration_s: float,
                         threshold: float) -> tuple[bool, str]:
    """Two-gate pass rule for quantum path verification.

    Gate 1: the noise-to-rate ratio must stay below the threshold.
    Gate 2: the on-clicks must be Poisson-consistent (within 3 sigma)
    with the rate expected from the stage-1 loss estimate plus the
    measured noise floor, so a mis-modeled loss fails even when quiet.
    """
    if click_rate_hz <= 0.0:
        return False, "no clicks detected"
    ratio = noise_rate_hz / click_rate_hz
    if ratio >= threshold:
        return False, f"noise/rate {ratio:.3f} >= {threshold:.3f}"
    predicted = expected_rate_hz + noise_rate_hz
    got = click_rate_hz * integration_s
    want = predicted * integration_s
    if abs(got - want) > 3.0 * math.sqrt(max(want, 1.0)):
        return False, (f"click rate {click_rate_hz:.1f}/s inconsistent with "
                       f"expected {predicted:.1f}/s")
    return True, "ok"


@dataclass
class AgentBase:
    resource_id: str
    engine: Engine
    bus: MessageBus
    graph: NetworkGraph
    world: PhysicsWorld
    online: bool = True
    register_delay_s: float = 0.0

    def go_offline(self) -> None:
        self.online = False

    def addressed_to_me(self, msg: BusMessage) -> bool:
        return self.online and msg.payload.get("to") == self.resource_id

    def publish(self, topic: str, kind: str, payload: dict,
                correlation_id: str) -> None:
        self.bus.publish(topic, sender=self.resource_id, kind=kind,
                         payload=payload, correlation_id=correlation_id)

    def registration(self) -> ResourceRegistration:
        node = self.graph.node(self.resource_id)
        claims = [{"port": p.index, "tag": p.tag} for p in
                  sorted(node.ports, key=lambda p: p.index)]
        features: dict = {"qubit_types": list(node.qubit_types)}
        if node.kind == NodeKind.EPS:
            features["wavelength_outputs"] = node.wavelength_outputs
        override = getattr(self, "claim_overrides", None)
        if override:
            for claim in claims:
                if claim["port"] in override:
                    claim["tag"] = override[claim["port"]]
        return ResourceRegistration(
            resource_id=self.resource_id,
            kind=node.kind.value,
            features=features,
            connectivity_claims=claims,
        )

    def start(self) -> None:
        """Schedule config load + registration."""
        self.engine.schedule_after(
            s_to_ns(self.register_delay_s),
            lambda ev: self.online and self.publish(
                Topics.REGISTER, Kind.REGISTER,
                self.registration().to_payload(), "discovery"))


@dataclass
class SwitchAgent(AgentBase):
    """Transparent optical switch: registers, then is driven entirely by
    the SDN agent's rule table."""


@dataclass
class SdnAgent(AgentBase):
    """Keeps the tag-derived topology and the switch crossconnect rules."""

    rule_tables: dict[str, dict[str, dict]] = field(default_factory=dict)
    switch_online: dict[str, bool] = field(default_factory=dict)

    def start(self) -> None:
        # The SDN agent knows the passive topology from port tags at
        # startup; it does not register as a quantum resource.
        for nid, node in self.graph.nodes.items():
            if node.kind == NodeKind.SWITCH:
                self.rule_tables.setdefault(nid, {})
                self.switch_online.setdefault(nid, True)
        self.bus.subscribe(Topics.TOPOLOGY, self.on_topology)

    def on_topology(self, msg: BusMessage) -> None:
        if not self.addressed_to_me(msg):
            return
        if msg.kind == Kind.TOPOLOGY_QUERY:
            self.publish(Topics.TOPOLOGY, Kind.TOPOLOGY_UPDATE,
                         {"to": msg.sender, "graph": self.graph.to_document(),
                          "reply_to": msg.payload.get("query_id", "")},
                         msg.correlation_id)
        elif msg.kind == Kind.VERIFY_CLAIMS:
            self.publish(Topics.TOPOLOGY, Kind.CLAIMS_VERIFIED,
                         {"to": msg.sender,
                          "resource": msg.payload["resource"],
                          "verdicts": self.verify_claims(
                              msg.payload["resource"], msg.payload["claims"])},
                         msg.correlation_id)
        elif msg.kind == Kind.ESTABLISH_PATHS:
            self.on_establish(msg)

    def verify_claims(self, resource_id: str, claims: list[dict]) -> list[dict]:
        """Cross-check a resource's claimed port tags against the passive
        tag topology; passive switches cannot be probed actively."""
        verdicts = []
        try:
            node = self.graph.node(resource_id)
        except Exception:
            return [{"port": c["port"], "ok": False, "reason": "unknown resource"}
                    for c in claims]
        by_index = {p.index: p.tag for p in node.ports}
        for claim in claims:
            expected = by_index.get(claim["port"])
            ok = expected is not None and expected == claim["tag"]
            verdicts.append({
                "port": claim["port"],
                "ok": bool(ok),
                "reason": "ok" if ok else
                f"tag mismatch: claimed {claim['tag']!r}, discovered {expected!r}",
            })
        return verdicts

    # -- switch rules ------------------------------------------------------

    def rules_for(self, lp_payload: dict) -> list[dict]:
        """Crossconnect rules implied by a lightpath: one per switch hop."""
        link_ids = lp_payload["link_ids"]
        src = lp_payload["endpoints"][0]
        nodes_seq = self.graph.walk_nodes(src, [self.graph.links[l] for l in link_ids])
        rules = []
        for i, nid in enumerate(nodes_seq[1:-1], start=1):
            node = self.graph.node(nid)
            if node.kind != NodeKind.SWITCH:
                continue
            link_in = self.graph.links[link_ids[i - 1]]
            link_out = self.graph.links[link_ids[i]]
            in_port = dict(link_in.endpoints)[nid] if nid in dict(link_in.endpoints) \
                else link_in.other_end(nodes_seq[i - 1])[1]
            out_port = link_out.endpoints[0][1] if link_out.endpoints[0][0] == nid \
                else link_out.endpoints[1][1]
            rules.append({"switch": nid, "channel": lp_payload["channel"],
                          "in_port": in_port, "out_port": out_port})
        return rules

    def on_establish(self, msg: BusMessage) -> None:
        action = msg.payload["action"]
        lightpaths = msg.payload["lightpaths"]
        if action == "install":
            pending = []
            for lp in lightpaths:
                for rule in self.rules_for(lp):
                    if not self.switch_online.get(rule["switch"], False):
                        self.publish(Topics.TOPOLOGY, Kind.NACK,
                                     {"to": msg.sender, "op": Kind.ESTABLISH_PATHS,
                                      "reason": f"switch {rule['switch']} unavailable"},
                                     msg.correlation_id)
                        return
                    pending.append((lp["id"], rule))
            for lp_id, rule in pending:
                self.rule_tables[rule["switch"]][lp_id] = rule
        else:
            for lp in lightpaths:
                for table in self.rule_tables.values():
                    table.pop(lp["id"], None)
        self.publish(Topics.TOPOLOGY, Kind.ACK,
                     {"to": msg.sender, "op": Kind.ESTABLISH_PATHS,
                      "action": action}, msg.correlation_id)

    def total_rules(self) -> int:
        return sum(len(t) for t in self.rule_tables.values())


@dataclass
class NodeAgent(AgentBase):
    """Q-Node: verifies paths, calibrates its analyzers, measures batches."""

    batch_interval_s: float = 1.0
    cal_eval_s: float = 0.002
    claim_overrides: dict[int, str] = field(default_factory=dict)
    _active: dict[str, dict] = field(default_factory=dict)

    def start(self) -> None:
        super().start()
        self.bus.subscribe("qnet/request/+/ctl", self.on_ctl)
        self.bus.subscribe(Topics.cal(self.resource_id), self.on_cal)

    # -- control messages ---------------------------------------------------

    def on_ctl(self, msg: BusMessage) -> None:
        if not self.online:
            return
        rid = msg.correlation_id
        if msg.kind == Kind.STATE:
            # Terminal or ended records stop the local tally loop.
            if msg.payload.get("state") in ("ended", "stored", "failed",
                                            "blocked", "rejected"):
                state = self._active.get(rid)
                if state is not None:
                    state["measuring"] = False
                    state["ended"] = True
            return
        if msg.kind == Kind.PATHS_ESTABLISHED and self.addressed_to_me(msg):
            self._active.setdefault(rid, {})["setup"] = msg.payload
            self.publish(Topics.request_ctl(rid), Kind.ACK,
                         {"to": msg.sender, "op": Kind.PATHS_ESTABLISHED}, rid)
        elif msg.kind == Kind.VERIFY_PATH and self.addressed_to_me(msg):
            self._verify(rid, msg.payload)
        elif msg.kind == Kind.START:
            setup = self._active.get(rid, {}).get("setup")
            if setup and setup.get("tally_owner") == self.resource_id:
                state = self._active[rid]
                state["measuring"] = True
                state["ebits"] = state.get("ebits", 0)
                state["batch_seq"] = state.get("batch_seq", 0)
                self.engine.schedule_after(s_to_ns(self.batch_interval_s),
                                           lambda ev, r=rid: self._batch_tick(r))
        elif msg.kind == Kind.END and msg.sender != self.resource_id:
            # The partner node announced END: measurement exchange over
            # the sync channel lets this node stop at the same tally.
            state = self._active.get(rid)
            setup = state.get("setup") if state else None
            if setup and not state.get("ended") and msg.sender in setup.get("node_pair", []):
                state["ended"] = True
                state["measuring"] = False
                self.publish(Topics.request_ctl(rid), Kind.END,
                             {"to": "server", "ebits": state.get("ebits", 0)}, rid)

    def _verify(self, rid: str, payload: dict) -> None:
        lp = Lightpath(id=payload["lightpath"]["id"],
                       link_ids=payload["lightpath"]["link_ids"],
                       channel=self.graph.channel(payload["lightpath"]["channel"]),
                       total_loss_db=payload["lightpath"]["total_loss_db"],
                       endpoints=tuple(payload["lightpath"]["endpoints"]))
        integration = payload["integration_s"]
        probe_s = payload["classical_probe_s"]
        attempt = payload["attempt"]
        threshold = payload["threshold"]

        def finish(ev):
            if not self.online:
                return
            sample = self.world.verification_sample(
                rid, payload["eps_id"], lp, self.resource_id, integration, attempt)
            passed, why = verification_verdict(
                sample["click_rate_hz"], sample["noise_rate_hz"],
                sample["expected_rate_hz"], integration, threshold)
            result = {
                "to": "server",
                "lightpath_id": lp.id,
                "loss_estimate_db": sample["loss_estimate_db"],
                "click_rate_hz": sample["click_rate_hz"],
                "noise_rate_hz": sample["noise_rate_hz"],
                "passed": bool(passed),
                "detail": why,
            }
            self.publish(Topics.request_ctl(rid), Kind.VERIFICATION_RESULT,
                         result, rid)
            if not passed:
                self.publish(Topics.request_ctl(rid), Kind.NACK,
                             {"to": "server", "op": Kind.VERIFY_PATH,
                              "lightpath_id": lp.id, "reason": why}, rid)

        # Classical probe, then quantum-on, then quantum-off noise stage.
        self.engine.schedule_after(s_to_ns(probe_s + 2.0 * integration), finish)

    # -- calibration ---------------------------------------------------------

    def on_cal(self, msg: BusMessage) -> None:
        if msg.kind != Kind.CALIBRATE or not self.addressed_to_me(msg):
            return
        rid = msg.correlation_id
        procedure = msg.payload["procedure"]
        state = self._active.setdefault(rid, {})
        state["measuring"] = False  # pause batches during (re)calibration
        if procedure == "polarization":
            self._cal_polarization(rid, msg.payload)
        elif procedure == "timebin":
            self._cal_timebin(rid, msg.payload)
        elif procedure == "correlation_delay":
            self._cal_delay(rid, msg.payload)
        elif procedure == "hom_scan":
            self._cal_hom(rid, msg.payload)
        else:
            self.publish(Topics.cal(self.resource_id), Kind.NACK,
                         {"to": "server", "op": Kind.CALIBRATE,
                          "procedure": procedure, "reason": "unknown procedure"},
                         rid)

    def _done(self, rid: str, payload: dict, report: dict,
              duration_s: float, then_ready: bool) -> None:
        def fire(ev):
            if not self.online:
                return
            self.publish(Topics.cal(self.resource_id), Kind.CALIBRATION_DONE,
                         {"to": "server", **report}, rid)
            if then_ready:
                self.publish(Topics.request_ctl(rid), Kind.READY,
                             {"to": "server"}, rid)

        self.engine.schedule_after(s_to_ns(duration_s), fire)

    def _cal_fail(self, rid: str, procedure: str, reason: str,
                  duration_s: float) -> None:
        self.engine.schedule_after(
            s_to_ns(duration_s),
            lambda ev: self.online and self.publish(
                Topics.cal(self.resource_id), Kind.NACK,
                {"to": "server", "op": Kind.CALIBRATE, "procedure": procedure,
                 "reason": reason}, rid))

    def _cal_polarization(self, rid: str, payload: dict) -> None:
        chan = self.world.polarization_channel(payload["eps_id"], self.resource_id)
        phase = self.world.source_phase(payload["eps_id"])
        try:
            report = cal.align_polarization(chan, phase_eps_rad=phase)
        except cal.ConvergenceFailure as exc:
            self._cal_fail(rid, "polarization", str(exc), 5.0)
            return
        duration = report.iterations * self.cal_eval_s
        self._done(rid, payload,
                   {"procedure": "polarization", "node": self.resource_id,
                    "report": report.to_dict(), "duration_s": duration},
                   duration, payload.get("then_ready", False))

    def _cal_timebin(self, rid: str, payload: dict) -> None:
        # Bin identification first, then the analyzer interferometer is
        # tuned to the fringe maximum.
        offsets, counts, width = self.world.timebin_histogram(rid, self.resource_id)
        try:
            frame = cal.align_timebin(offsets, counts, bin_width_ps=width)
        except cal.PeaksUnresolved as exc:
            self._cal_fail(rid, "timebin", str(exc), 2.0)
            return
        phase, n_evals = cal.scan_then_golden(
            lambda p: -self.world.interferometer_output(rid, self.resource_id, p),
            0.0, 2.0 * math.pi, 24, 1e-4)
        duration = 2.0 + n_evals * self.cal_eval_s
        report = {"procedure": "timebin", "node": self.resource_id,
                  "report": {"early_offset_ps": frame.early_offset_ps,
                             "late_offset_ps": frame.late_offset_ps,
                             "middle_offset_ps": frame.middle_offset_ps,
                             "interferometer_phase_rad": phase % (2.0 * math.pi)},
                  "duration_s": duration}
        self._done(rid, payload, report, duration, payload.get("then_ready", False))

    def _cal_delay(self, rid: str, payload: dict) -> None:
        oracle, _signal = self.world.delay_oracle(
            rid, node_pair=tuple(payload["node_pair"]))
        span = payload.get("delay_span", 48)
        try:
            res = cal.find_correlation_delay(range(0, span), oracle,
                                             confirm_counts=payload.get(
                                                 "confirm_counts", 10))
        except cal.NotFound as exc:
            self._cal_fail(rid, "correlation_delay", str(exc), 5.0)
            return
        report = {"procedure": "correlation_delay", "node": self.resource_id,
                  "report": {"delay": res.delay,
                             "coincidences_used": res.coincidences_used,
                             "verified_excess": res.verified_excess,
                             "passes": res.passes},
                  "duration_s": res.integration_s}
        self._done(rid, payload, report, max(res.integration_s, 0.1),
                   payload.get("then_ready", False))

    def _cal_hom(self, rid: str, payload: dict) -> None:
        dip = self.world.hom_dip(payload["eps_id"])
        grid = np.linspace(-4.0 * dip.coherence_time_ps,
                           4.0 * dip.coherence_time_ps, 21)
        rng = self.engine.derive_rng(f"hom/{rid}/{self.resource_id}")
        try:
            res = cal.scan_hom(dip, grid, counts_per_point=10000, rng=rng)
        except cal.FitFailure as exc:
            self._cal_fail(rid, "hom_scan", str(exc), 5.0)
            return
        report = {"procedure": "hom_scan", "node": self.resource_id,
                  "report": {"best_delay_ps": res.best_delay_ps,
                             "fitted_visibility": res.fitted_visibility},
                  "duration_s": 21.0}
        self._done(rid, payload, report, 21.0, payload.get("then_ready", False))

    # -- distribution ----------------------------------------------------------

    def _batch_tick(self, rid: str) -> None:
        state = self._active.get(rid)
        if not self.online or not state or not state.get("measuring"):
            return
        setup = state["setup"]
        seq = state["batch_seq"]
        state["batch_seq"] = seq + 1
        lightpaths = {k: _lightpath_from_payload(self.graph, v)
                      for k, v in setup["lightpaths"].items()}
        batch = self.world.batch_sample(
            rid, setup["eps_id"], lightpaths, tuple(setup["node_pair"]),
            setup["basis"], self.batch_interval_s, seq)
        state["ebits"] = state.get("ebits", 0) + batch["ebits"]
        self.publish(Topics.request_meas(rid), Kind.MEASUREMENT_BATCH,
                     {"to": "server", "seq": seq,
                      "ebits_total": state["ebits"], **batch}, rid)
        if state["ebits"] >= setup["target_ebits"] and not state.get("ended"):
            state["ended"] = True
            state["measuring"] = False
            self.publish(Topics.request_ctl(rid), Kind.END,
                         {"to": "server", "ebits": state["ebits"]}, rid)
            return
        self.engine.schedule_after(s_to_ns(self.batch_interval_s),
                                   lambda ev: self._batch_tick(rid))

    def resume(self, rid: str) -> None:
        state = self._active.get(rid)
        if state and state.get("setup", {}).get("tally_owner") == self.resource_id \
                and not state.get("ended"):
            state["measuring"] = True
            self.engine.schedule_after(s_to_ns(self.batch_interval_s),
                                       lambda ev: self._batch_tick(rid))


def _lightpath_from_payload(graph: NetworkGraph, p: dict) -> Lightpath:
    return Lightpath(id=p["id"], link_ids=list(p["link_ids"]),
                     channel=graph.channel(p["channel"]),
                     total_loss_db=p["total_loss_db"],
                     endpoints=tuple(p["endpoints"]))


@dataclass
class EpsAgent(AgentBase):
    """Entangled pair source: sends alignment light, starts and stops
    pair distribution on command."""

    claim_overrides: dict[int, str] = field(default_factory=dict)
    _emitting: dict[str, bool] = field(default_factory=dict)

    def start(self) -> None:
        super().start()
        self.bus.subscribe("qnet/request/+/ctl", self.on_ctl)
        self.bus.subscribe(Topics.cal(self.resource_id), self.on_cal)

    def on_cal(self, msg: BusMessage) -> None:
        if msg.kind != Kind.CALIBRATE or not self.addressed_to_me(msg):
            return
        rid = msg.correlation_id
        # Multiplex the broadband alignment light into the quantum
        # channels; nothing to optimize source-side.
        duration = 0.5

        def fire(ev):
            if not self.online:
                return
            self.publish(Topics.cal(self.resource_id), Kind.CALIBRATION_DONE,
                         {"to": "server", "procedure": "send_alignment",
                          "node": self.resource_id, "report": {},
                          "duration_s": duration}, rid)
            if msg.payload.get("then_ready"):
                self.publish(Topics.request_ctl(rid), Kind.READY,
                             {"to": "server"}, rid)

        self.engine.schedule_after(s_to_ns(duration), fire)

    def on_ctl(self, msg: BusMessage) -> None:
        if not self.addressed_to_me(msg):
            return
        rid = msg.correlation_id
        if msg.kind == Kind.PATHS_ESTABLISHED:
            self.publish(Topics.request_ctl(rid), Kind.ACK,
                         {"to": msg.sender, "op": Kind.PATHS_ESTABLISHED}, rid)
        elif msg.kind == Kind.START:
            self._emitting[rid] = True
        elif msg.kind == Kind.END:
            self._emitting[rid] = False
            self.publish(Topics.request_ctl(rid), Kind.ACK,
                         {"to": msg.sender, "op": Kind.END}, rid)
