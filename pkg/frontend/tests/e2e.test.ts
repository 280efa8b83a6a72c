// End-to-end against a real gateway process: submit through the portal's
// own code path, follow the event stream, and check that what the portal
// renders agrees with the server's authoritative record and topology.

import assert from "node:assert/strict";
import { spawn, type ChildProcess } from "node:child_process";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import test from "node:test";

import { ApiClient } from "../src/api.js";
import { validateRequestForm } from "../src/form.js";
import {
  applyTraceRecord,
  emptyLifecycle,
  stateSequence,
  topologyView,
} from "../src/state.js";
import {
  renderLifecycle,
  renderTopology,
  renderedBadges,
  renderedStateSequence,
} from "../src/render.js";

const ROOT = join(dirname(fileURLToPath(import.meta.url)), "..", "..", "..");
const SCENARIO = join(ROOT, "scenarios", "live.yaml");
const TOKEN = "portal-e2e-token";

function startGateway(): Promise<{ child: ChildProcess; baseUrl: string }> {
  return new Promise((resolve, reject) => {
    const child = spawn(
      "python3",
      ["-m", "qnetsim.gateway.cli", "serve", SCENARIO,
        "--listen", "127.0.0.1:0", "--pace", "0.1"],
      { cwd: ROOT, env: { ...process.env, QNET_TOKEN: TOKEN } },
    );
    let out = "";
    const timer = setTimeout(
      () => reject(new Error(`gateway did not start:\n${out}`)),
      30_000,
    );
    child.stdout!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const m = out.match(/listening on (http:\/\/[\d.]+:\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve({ child, baseUrl: m[1]! });
      }
    });
    child.stderr!.on("data", (chunk: Buffer) => {
      out += chunk.toString();
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`gateway exited early (${code}):\n${out}`));
    });
  });
}

async function waitForDiscovery(client: ApiClient): Promise<void> {
  const deadline = Date.now() + 20_000;
  while (Date.now() < deadline) {
    try {
      const status = await client.getStatus();
      if (Object.keys(status.resources).length >= 4) return;
    } catch {
      // server thread still warming up
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error("discovery never settled");
}

test("e2e: portal lifecycle and topology views agree with the gateway", async () => {
  const { child, baseUrl } = await startGateway();
  try {
    const client = new ApiClient({ baseUrl, token: TOKEN });
    await waitForDiscovery(client);

    // Empty occupancy before any request, as rendered.
    let topoPayload = await client.getTopology();
    let badges = renderedBadges(renderTopology(topologyView(topoPayload)));
    assert.ok(Object.values(badges).every((n) => n === 0));

    // Submit exactly the way the form does.
    const known = new Set(topoPayload.topology.nodes.map((n) => n.id));
    const check = validateRequestForm(
      {
        requester: "portal-e2e",
        qubitType: "polarization",
        nodeA: "node-a",
        nodeB: "node-b",
        startS: "0",
        endS: "600",
        basis: "hv",
        targetEbits: "20000",
        service: "entanglement",
      },
      known,
    );
    assert.equal(check.ok, true);
    const { id } = await client.submitRequest(check.payload!);

    // Follow the stream, folding records into the lifecycle view and
    // grabbing a topology snapshot while the lightpaths are held.
    let view = emptyLifecycle(id);
    let duringDistribution: {
      rendered: Record<string, number>;
      payload: Record<string, string[]>;
    } | null = null;
    for await (const record of client.events(id)) {
      view = applyTraceRecord(view, record);
      if (
        duringDistribution === null &&
        view.currentState === "distributing"
      ) {
        const snap = await client.getTopology();
        duringDistribution = {
          rendered: renderedBadges(renderTopology(topologyView(snap))),
          payload: snap.occupancy,
        };
      }
      if (view.terminal) break;
    }

    assert.equal(view.currentState, "stored");
    assert.ok(view.ebitsDelivered >= 20000);
    assert.ok(view.batches.length > 0);
    assert.ok(view.calibrations.length >= 3);

    // Rendered state sequence equals the server's authoritative record.
    const record = await client.getRequest(id);
    const serverSequence = record.state_history.map((e) => e.state);
    assert.deepEqual(stateSequence(view), serverSequence);
    assert.deepEqual(
      renderedStateSequence(renderLifecycle(view)),
      serverSequence,
    );

    // Occupancy badges while established matched the API payload.
    assert.ok(duringDistribution, "never observed the distributing state");
    const payloadCounts = Object.fromEntries(
      Object.entries(duringDistribution!.payload).map(([k, v]) => [
        k,
        v.length,
      ]),
    );
    assert.deepEqual(duringDistribution!.rendered, payloadCounts);
    const totalHeld = Object.values(payloadCounts).reduce((a, b) => a + b, 0);
    assert.ok(totalHeld >= 3, `expected >=3 held channels, saw ${totalHeld}`);

    // And after release everything is free again, rendered and raw.
    topoPayload = await client.getTopology();
    badges = renderedBadges(renderTopology(topologyView(topoPayload)));
    assert.deepEqual(
      badges,
      Object.fromEntries(
        Object.entries(topoPayload.occupancy).map(([k, v]) => [k, v.length]),
      ),
    );
    assert.ok(Object.values(badges).every((n) => n === 0));
  } finally {
    child.kill("SIGKILL");
  }
});

test("e2e: submissions without the bearer token are refused", async () => {
  const { child, baseUrl } = await startGateway();
  try {
    const client = new ApiClient({ baseUrl, token: "" });
    await waitForDiscovery(client);
    await assert.rejects(
      client.submitRequest({
        requester: "portal-e2e",
        qubit_type: "polarization",
        node_pair: ["node-a", "node-b"],
        end_s: 600,
      }),
      /401|bearer/i,
    );
  } finally {
    child.kill("SIGKILL");
  }
});
