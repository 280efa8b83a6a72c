// View models, all derived from server payloads by pure folds. The
// portal never invents protocol states: the lifecycle view is exactly
// the sequence of state announcements found in the trace.

import type { TopologyPayload, TraceRecord } from "./types.js";
import { TERMINAL_STATES } from "./types.js";

export interface LifecycleEntry {
  state: string;
  tNs: number;
}

export interface CalibrationEntry {
  node: string;
  procedure: string;
  residual: number | null;
  durationS: number | null;
  tNs: number;
}

export interface BatchPoint {
  tNs: number;
  visibility: number | null;
  car: number | null;
  nonclassical: boolean | null;
  ebitsTotal: number;
}

export interface LifecycleView {
  requestId: string;
  timeline: LifecycleEntry[];
  currentState: string;
  terminal: boolean;
  ebitsDelivered: number;
  calibrations: CalibrationEntry[];
  batches: BatchPoint[];
  rejectionReason: string | null;
  failureReason: string | null;
  lastSeq: number;
}

export function emptyLifecycle(requestId: string): LifecycleView {
  return {
    requestId,
    timeline: [],
    currentState: "",
    terminal: false,
    ebitsDelivered: 0,
    calibrations: [],
    batches: [],
    rejectionReason: null,
    failureReason: null,
    lastSeq: -1,
  };
}

export function applyTraceRecord(
  view: LifecycleView,
  record: TraceRecord,
): LifecycleView {
  if (record.correlation_id !== view.requestId || record.seq <= view.lastSeq) {
    return view;
  }
  const next: LifecycleView = { ...view, lastSeq: record.seq };
  const p = record.payload;
  switch (record.kind) {
    case "state": {
      const state = String(p["state"]);
      next.timeline = [...view.timeline, { state, tNs: record.t_ns }];
      next.currentState = state;
      next.terminal = TERMINAL_STATES.has(state);
      if (state === "rejected" && typeof p["reason"] === "string") {
        next.rejectionReason = p["reason"];
      }
      if (state === "failed" && typeof p["reason"] === "string") {
        next.failureReason = p["reason"];
      }
      if (typeof p["ebits_delivered"] === "number") {
        next.ebitsDelivered = p["ebits_delivered"];
      }
      break;
    }
    case "calibration_done": {
      const report = (p["report"] ?? {}) as Record<string, unknown>;
      const residual = report["residual_infidelity"];
      next.calibrations = [
        ...view.calibrations,
        {
          node: String(p["node"] ?? record.sender),
          procedure: String(p["procedure"] ?? "?"),
          residual: typeof residual === "number" ? residual : null,
          durationS:
            typeof p["duration_s"] === "number" ? p["duration_s"] : null,
          tNs: record.t_ns,
        },
      ];
      break;
    }
    case "measurement_batch": {
      next.batches = [
        ...view.batches,
        {
          tNs: record.t_ns,
          visibility:
            typeof p["visibility"] === "number" ? p["visibility"] : null,
          car: typeof p["car"] === "number" ? p["car"] : null,
          nonclassical:
            typeof p["nonclassical"] === "boolean" ? p["nonclassical"] : null,
          ebitsTotal:
            typeof p["ebits_total"] === "number" ? p["ebits_total"] : 0,
        },
      ];
      if (typeof p["ebits_total"] === "number") {
        next.ebitsDelivered = Math.max(view.ebitsDelivered, p["ebits_total"]);
      }
      break;
    }
    case "store_results": {
      if (typeof p["ebits_delivered"] === "number") {
        next.ebitsDelivered = p["ebits_delivered"];
      }
      break;
    }
  }
  return next;
}

export function reduceLifecycle(
  requestId: string,
  records: Iterable<TraceRecord>,
): LifecycleView {
  let view = emptyLifecycle(requestId);
  for (const record of records) {
    view = applyTraceRecord(view, record);
  }
  return view;
}

/** The rendered state sequence: exactly what the server announced. */
export function stateSequence(view: LifecycleView): string[] {
  return view.timeline.map((e) => e.state);
}

// -- topology ----------------------------------------------------------------

export interface TopologyNodeView {
  id: string;
  kind: string;
  quarantined: boolean;
  schedulable: boolean;
  online: boolean;
}

export interface TopologyLinkView {
  id: string;
  a: string;
  b: string;
  lengthKm: number;
  occupiedChannels: string[];
  badge: number;
  totalWavelengths: number;
}

export interface TopologyView {
  tNs: number;
  nodes: TopologyNodeView[];
  links: TopologyLinkView[];
  empty: boolean;
}

export function topologyView(payload: TopologyPayload): TopologyView {
  const nodes = payload.topology.nodes.map((n) => {
    const res = payload.resources[n.id];
    return {
      id: n.id,
      kind: n.kind,
      quarantined: res?.quarantined ?? false,
      schedulable: res?.schedulable ?? false,
      online: res?.online ?? false,
    };
  });
  const links = payload.topology.links.map((l) => {
    const occupied = payload.occupancy[l.id] ?? [];
    return {
      id: l.id,
      a: l.a.node,
      b: l.b.node,
      lengthKm: l.length_km,
      occupiedChannels: [...occupied],
      badge: occupied.length,
      totalWavelengths: l.total_wavelengths,
    };
  });
  return {
    tNs: payload.t_ns,
    nodes,
    links,
    empty: nodes.length === 0,
  };
}
