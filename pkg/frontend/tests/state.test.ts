import assert from "node:assert/strict";
import test from "node:test";

import {
  applyTraceRecord,
  emptyLifecycle,
  reduceLifecycle,
  stateSequence,
  topologyView,
} from "../src/state.js";
import { renderLifecycle, renderedStateSequence } from "../src/render.js";
import type { TopologyPayload, TraceRecord } from "../src/types.js";

let seq = 0;

function rec(
  kind: string,
  payload: Record<string, unknown>,
  rid = "req-x",
  tNs = 0,
): TraceRecord {
  return {
    t_ns: tNs,
    seq: seq++,
    topic: `qnet/request/${rid}/ctl`,
    sender: "server",
    correlation_id: rid,
    kind,
    payload,
  };
}

function happyTrace(rid = "req-x"): TraceRecord[] {
  const states = [
    "received",
    "eps_selected",
    "paths_established",
    "paths_verified",
    "calibrating",
    "ready",
    "distributing",
    "ended",
    "stored",
  ];
  const records: TraceRecord[] = [];
  let t = 0;
  for (const s of states) {
    records.push(rec("state", { state: s }, rid, (t += 1e9)));
    if (s === "calibrating") {
      records.push(
        rec(
          "calibration_done",
          {
            procedure: "polarization",
            node: "node-a",
            report: { residual_infidelity: 3.2e-7 },
            duration_s: 1.7,
          },
          rid,
          t,
        ),
      );
    }
    if (s === "distributing") {
      for (let i = 0; i < 3; i++) {
        records.push(
          rec(
            "measurement_batch",
            {
              seq: i,
              visibility: 0.94 - i * 0.01,
              car: 1900 - i * 10,
              nonclassical: true,
              ebits_total: (i + 1) * 2500,
            },
            rid,
            (t += 1e9),
          ),
        );
      }
    }
  }
  return records;
}

test("rendered state sequence equals the trace's state sequence", () => {
  const trace = happyTrace();
  const view = reduceLifecycle("req-x", trace);
  const traceStates = trace
    .filter((r) => r.kind === "state")
    .map((r) => String(r.payload["state"]));
  assert.deepEqual(stateSequence(view), traceStates);
  // And the property holds through the actual renderer output.
  assert.deepEqual(renderedStateSequence(renderLifecycle(view)), traceStates);
});

test("replay property holds for a trace with a recalibration loop", () => {
  const rid = "req-loop";
  const states = [
    "received",
    "eps_selected",
    "paths_established",
    "paths_established",
    "paths_verified",
    "calibrating",
    "ready",
    "distributing",
    "calibrating",
    "ready",
    "distributing",
    "ended",
    "stored",
  ];
  const trace = states.map((s, i) => rec("state", { state: s }, rid, i * 1e9));
  const view = reduceLifecycle(rid, trace);
  assert.deepEqual(stateSequence(view), states);
  assert.deepEqual(renderedStateSequence(renderLifecycle(view)), states);
  // Calibrating re-entry is visible: two distinct entries.
  assert.equal(stateSequence(view).filter((s) => s === "calibrating").length, 2);
});

test("records for other requests and duplicate sequences are ignored", () => {
  let view = emptyLifecycle("req-a");
  const mine = rec("state", { state: "received" }, "req-a");
  const other = rec("state", { state: "failed" }, "req-b");
  view = applyTraceRecord(view, mine);
  view = applyTraceRecord(view, other);
  view = applyTraceRecord(view, mine); // replayed duplicate
  assert.deepEqual(stateSequence(view), ["received"]);
});

test("batches accumulate ebits and carry the server nonclassical flag", () => {
  const view = reduceLifecycle("req-x", happyTrace());
  assert.equal(view.batches.length, 3);
  assert.equal(view.ebitsDelivered, 7500);
  assert.equal(view.batches[2]!.nonclassical, true);
  assert.equal(view.calibrations[0]!.residual, 3.2e-7);
});

test("terminal flag follows server states only", () => {
  let view = emptyLifecycle("req-t");
  view = applyTraceRecord(view, rec("state", { state: "received" }, "req-t"));
  assert.equal(view.terminal, false);
  view = applyTraceRecord(
    view,
    rec("state", { state: "blocked", reason: "no wavelength" }, "req-t"),
  );
  assert.equal(view.terminal, true);
  assert.equal(view.currentState, "blocked");
});

const topoPayload: TopologyPayload = {
  t_ns: 5_000_000_000,
  topology: {
    nodes: [
      { id: "node-a", kind: "qnode", insertion_loss_db: 0, ports: [] },
      { id: "sw1", kind: "switch", insertion_loss_db: 1, ports: [] },
      { id: "eps-1", kind: "eps", insertion_loss_db: 0, ports: [] },
    ],
    links: [
      {
        id: "fiber-a",
        a: { node: "node-a", port: 0 },
        b: { node: "sw1", port: 1 },
        length_km: 1.3,
        attenuation: { o_band: 0.33 },
        total_wavelengths: 8,
      },
    ],
    grid: [],
  },
  occupancy: { "fiber-a": ["q1310", "C32"] },
  resources: {
    "node-a": { schedulable: true, quarantined: false, online: true },
    sw1: { schedulable: true, quarantined: false, online: true },
    "eps-1": { schedulable: false, quarantined: true, online: true },
  },
};

test("topology view derives badges and quarantine from the payload", () => {
  const view = topologyView(topoPayload);
  assert.equal(view.empty, false);
  assert.equal(view.links[0]!.badge, 2);
  assert.deepEqual(view.links[0]!.occupiedChannels, ["q1310", "C32"]);
  const eps = view.nodes.find((n) => n.id === "eps-1")!;
  assert.equal(eps.quarantined, true);
  assert.equal(eps.schedulable, false);
});

test("empty topology yields the empty-state view", () => {
  const view = topologyView({
    t_ns: 0,
    topology: { nodes: [], links: [], grid: [] },
    occupancy: {},
    resources: {},
  });
  assert.equal(view.empty, true);
});
