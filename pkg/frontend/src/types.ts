// Wire types mirroring the gateway API payloads. The portal renders only
// what the server sends; nothing here is derived client-side.

export interface TraceRecord {
  t_ns: number;
  seq: number;
  topic: string;
  sender: string;
  correlation_id: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface StateHistoryEntry {
  t_ns: number;
  state: string;
}

export interface RequestRecordPayload {
  request: {
    id: string;
    requester: string;
    qubit_type: string;
    node_pair: [string, string];
    start_time_s: number;
    end_time_s: number;
    calibration_basis: string;
    target_ebits: number;
    service: string;
  };
  state: string;
  state_history: StateHistoryEntry[];
  eps_id: string | null;
  bsm_id: string | null;
  lightpaths: Record<string, string>;
  ebits_delivered: number;
  establish_attempts: number;
  verify_attempts: number;
  recalibrations: number;
  failure_reason: string | null;
  rejection_reason: string | null;
  fidelity_estimate: number | null;
}

export interface TopologyNode {
  id: string;
  kind: string;
  insertion_loss_db: number;
  ports: { index: number; tag: string }[];
  ip?: string;
  wavelength_outputs?: number;
  qubit_types?: string[];
}

export interface TopologyLink {
  id: string;
  a: { node: string; port: number };
  b: { node: string; port: number };
  length_km: number;
  attenuation: Record<string, number>;
  total_wavelengths: number;
}

export interface TopologyPayload {
  t_ns: number;
  topology: {
    nodes: TopologyNode[];
    links: TopologyLink[];
    grid: { label: string; center_nm: number; width_ghz: number; band: string }[];
  };
  occupancy: Record<string, string[]>;
  resources: Record<
    string,
    { schedulable: boolean; quarantined: boolean; online: boolean }
  >;
}

export interface StatusPayload {
  t_ns: number;
  requests: Record<string, number>;
  resources: Record<
    string,
    { kind: string; schedulable: boolean; quarantined: boolean }
  >;
  occupied_channels: number;
}

export interface SubmitResponse {
  id: string;
  state: string;
}

export const TERMINAL_STATES = new Set([
  "stored",
  "rejected",
  "blocked",
  "failed",
]);
