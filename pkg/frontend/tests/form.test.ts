import assert from "node:assert/strict";
import test from "node:test";

import { validateRequestForm, type RequestFormFields } from "../src/form.js";

const KNOWN = new Set(["node-a", "node-b"]);

function fields(overrides: Partial<RequestFormFields> = {}): RequestFormFields {
  return {
    requester: "operator",
    qubitType: "polarization",
    nodeA: "node-a",
    nodeB: "node-b",
    startS: "0",
    endS: "600",
    basis: "hv",
    targetEbits: "1000",
    service: "entanglement",
    ...overrides,
  };
}

test("valid form produces the gateway payload shape", () => {
  const result = validateRequestForm(fields(), KNOWN);
  assert.equal(result.ok, true);
  assert.deepEqual(result.payload, {
    requester: "operator",
    qubit_type: "polarization",
    node_pair: ["node-a", "node-b"],
    start_s: 0,
    end_s: 600,
    calibration_basis: "hv",
    target_ebits: 1000,
    service: "entanglement",
  });
});

test("unknown node pair fails inline without producing a payload", () => {
  const result = validateRequestForm(fields({ nodeB: "mars" }), KNOWN);
  assert.equal(result.ok, false);
  assert.match(result.errors["nodeB"]!, /unknown node/);
  assert.equal(result.payload, undefined);
});

test("identical nodes rejected", () => {
  const result = validateRequestForm(fields({ nodeB: "node-a" }), KNOWN);
  assert.equal(result.ok, false);
  assert.match(result.errors["nodeB"]!, /distinct/);
});

test("end must exceed start", () => {
  const result = validateRequestForm(fields({ startS: "10", endS: "10" }), KNOWN);
  assert.equal(result.ok, false);
  assert.ok(result.errors["endS"]);
});

test("target ebits must be a positive integer", () => {
  for (const bad of ["0", "-3", "2.5", "many"]) {
    const result = validateRequestForm(fields({ targetEbits: bad }), KNOWN);
    assert.equal(result.ok, false, `accepted ${bad}`);
  }
});

test("qubit type and service are constrained to the contract", () => {
  assert.equal(
    validateRequestForm(fields({ qubitType: "spin" }), KNOWN).ok,
    false,
  );
  assert.equal(
    validateRequestForm(fields({ service: "routing" }), KNOWN).ok,
    false,
  );
  assert.equal(
    validateRequestForm(fields({ qubitType: "time_bin" }), KNOWN).ok,
    true,
  );
});

test("empty requester rejected", () => {
  const result = validateRequestForm(fields({ requester: "  " }), KNOWN);
  assert.equal(result.ok, false);
});
