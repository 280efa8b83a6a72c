// Submission form model. Validation mirrors the gateway schema so bad
// input never produces an API call.

export interface RequestFormFields {
  requester: string;
  qubitType: string;
  nodeA: string;
  nodeB: string;
  startS: string;
  endS: string;
  basis: string;
  targetEbits: string;
  service: string;
}

export interface FormValidation {
  ok: boolean;
  errors: Record<string, string>;
  payload?: Record<string, unknown>;
}

const QUBIT_TYPES = new Set(["polarization", "time_bin"]);
const SERVICES = new Set(["entanglement", "teleportation"]);

export function validateRequestForm(
  fields: RequestFormFields,
  knownNodeIds: Set<string>,
): FormValidation {
  const errors: Record<string, string> = {};
  if (!fields.requester.trim()) {
    errors["requester"] = "requester credential is required";
  }
  if (!QUBIT_TYPES.has(fields.qubitType)) {
    errors["qubitType"] = `qubit type must be one of ${[...QUBIT_TYPES].join(", ")}`;
  }
  if (!SERVICES.has(fields.service)) {
    errors["service"] = `service must be one of ${[...SERVICES].join(", ")}`;
  }
  for (const [key, value] of [
    ["nodeA", fields.nodeA],
    ["nodeB", fields.nodeB],
  ] as const) {
    if (!value) {
      errors[key] = "node id is required";
    } else if (!knownNodeIds.has(value)) {
      errors[key] = `unknown node id ${value}`;
    }
  }
  if (fields.nodeA && fields.nodeA === fields.nodeB) {
    errors["nodeB"] = "node pair must be distinct";
  }
  const startS = Number(fields.startS);
  const endS = Number(fields.endS);
  if (!Number.isFinite(startS) || startS < 0) {
    errors["startS"] = "start must be a nonnegative number of seconds";
  }
  if (!Number.isFinite(endS) || endS <= startS) {
    errors["endS"] = "end must be after start";
  }
  const target = Number(fields.targetEbits);
  if (!Number.isInteger(target) || target < 1) {
    errors["targetEbits"] = "target ebits must be an integer >= 1";
  }
  if (Object.keys(errors).length > 0) {
    return { ok: false, errors };
  }
  return {
    ok: true,
    errors: {},
    payload: {
      requester: fields.requester.trim(),
      qubit_type: fields.qubitType,
      node_pair: [fields.nodeA, fields.nodeB],
      start_s: startS,
      end_s: endS,
      calibration_basis: fields.basis || "hv",
      target_ebits: target,
      service: fields.service,
    },
  };
}
