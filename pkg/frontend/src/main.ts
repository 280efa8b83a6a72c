// Browser entry point: wires the form, topology view, and lifecycle
// streams together. All state shown comes from gateway payloads.

import { ApiClient, ApiError } from "./api.js";
import { loadConfig, saveConfig, type PortalConfig } from "./config.js";
import { validateRequestForm, type RequestFormFields } from "./form.js";
import {
  applyTraceRecord,
  emptyLifecycle,
  topologyView,
  type LifecycleView,
} from "./state.js";
import { renderFormErrors, renderLifecycle, renderTopology } from "./render.js";

interface Watch {
  view: LifecycleView;
  abort: AbortController;
  lastPayload: Record<string, unknown> | null;
}

const watches = new Map<string, Watch>();
let client: ApiClient;
let config: PortalConfig;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function readForm(): RequestFormFields {
  const val = (id: string) => ($(id) as HTMLInputElement).value;
  return {
    requester: val("f-requester"),
    qubitType: val("f-qubit"),
    nodeA: val("f-node-a"),
    nodeB: val("f-node-b"),
    startS: val("f-start"),
    endS: val("f-end"),
    basis: val("f-basis"),
    targetEbits: val("f-ebits"),
    service: val("f-service"),
  };
}

async function refreshTopology(): Promise<void> {
  try {
    const payload = await client.getTopology();
    $("topology").innerHTML = renderTopology(topologyView(payload));
    const nodeIds = payload.topology.nodes
      .filter((n) => n.kind === "qnode")
      .map((n) => n.id);
    const dl = $("node-ids") as HTMLDataListElement;
    dl.innerHTML = nodeIds
      .map((id) => `<option value="${id}"></option>`)
      .join("");
  } catch (err) {
    $("topology").innerHTML =
      `<section class="topology empty"><p>gateway unreachable: ${String(err)}</p></section>`;
  }
}

function renderWatches(): void {
  const container = $("lifecycles");
  container.innerHTML = [...watches.values()]
    .map((w) => renderLifecycle(w.view))
    .join("");
}

async function watchRequest(
  id: string,
  sourcePayload: Record<string, unknown> | null,
): Promise<void> {
  if (watches.has(id)) return;
  const watch: Watch = {
    view: emptyLifecycle(id),
    abort: new AbortController(),
    lastPayload: sourcePayload,
  };
  watches.set(id, watch);
  renderWatches();
  try {
    for await (const record of client.events(id, { signal: watch.abort.signal })) {
      watch.view = applyTraceRecord(watch.view, record);
      renderWatches();
      if (record.kind === "state") void refreshTopology();
    }
  } catch (err) {
    if (!(err instanceof ApiError && err.status === 404)) throw err;
  }
  void refreshTopology();
}

async function onSubmit(event: Event): Promise<void> {
  event.preventDefault();
  const knownNodes = new Set<string>();
  try {
    const topo = await client.getTopology();
    for (const n of topo.topology.nodes) knownNodes.add(n.id);
  } catch {
    // validation still runs against an empty set and reports node errors
  }
  const fields = readForm();
  const check = validateRequestForm(fields, knownNodes);
  $("form-errors").innerHTML = renderFormErrors(check.errors);
  if (!check.ok || !check.payload) return;
  try {
    const resp = await client.submitRequest(check.payload);
    void watchRequest(resp.id, check.payload);
  } catch (err) {
    $("form-errors").innerHTML = renderFormErrors({
      submit: err instanceof Error ? err.message : String(err),
    });
  }
}

function onLifecycleClick(event: Event): void {
  const target = event.target as HTMLElement;
  if (target.dataset["action"] !== "resubmit") return;
  const rid = target.dataset["request"];
  const watch = rid ? watches.get(rid) : undefined;
  if (!watch?.lastPayload) return;
  void client.submitRequest(watch.lastPayload).then((resp) => {
    void watchRequest(resp.id, watch.lastPayload);
  });
}

function applySettings(): void {
  config = {
    baseUrl: ($("s-base") as HTMLInputElement).value.replace(/\/$/, ""),
    token: ($("s-token") as HTMLInputElement).value,
  };
  saveConfig(config, window.localStorage);
  client = new ApiClient(config);
  void refreshTopology();
}

export function boot(): void {
  config = loadConfig(window.localStorage);
  ($("s-base") as HTMLInputElement).value = config.baseUrl;
  ($("s-token") as HTMLInputElement).value = config.token;
  client = new ApiClient(config);
  $("settings-apply").addEventListener("click", applySettings);
  $("request-form").addEventListener("submit", onSubmit);
  $("lifecycles").addEventListener("click", onLifecycleClick);
  $("f-watch").addEventListener("click", () => {
    const rid = ($("f-watch-id") as HTMLInputElement).value.trim();
    if (rid) void watchRequest(rid, null);
  });
  void refreshTopology();
  window.setInterval(() => void refreshTopology(), 5000);
}

if (typeof document !== "undefined" && document.getElementById("request-form")) {
  boot();
}
