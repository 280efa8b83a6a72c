// HTML renderers: pure functions from view models to markup strings.
// Keeping them DOM-free makes the rendered output assertable in tests.

import type {
  BatchPoint,
  LifecycleView,
  TopologyView,
} from "./state.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function fmtSeconds(tNs: number): string {
  return (tNs / 1e9).toFixed(3) + "s";
}

// -- sparklines ----------------------------------------------------------------

export function sparkline(
  values: (number | null)[],
  opts: { width?: number; height?: number; min?: number; max?: number; cls?: string } = {},
): string {
  const width = opts.width ?? 160;
  const height = opts.height ?? 36;
  const pts = values.filter((v): v is number => v !== null && Number.isFinite(v));
  if (pts.length === 0) {
    return `<svg class="spark ${opts.cls ?? ""}" width="${width}" height="${height}"></svg>`;
  }
  const lo = opts.min ?? Math.min(...pts);
  const hi = opts.max ?? Math.max(...pts);
  const span = hi - lo || 1;
  const step = pts.length > 1 ? width / (pts.length - 1) : 0;
  const coords = pts
    .map((v, i) => {
      const x = (i * step).toFixed(1);
      const y = (height - ((v - lo) / span) * (height - 4) - 2).toFixed(1);
      return `${x},${y}`;
    })
    .join(" ");
  return (
    `<svg class="spark ${opts.cls ?? ""}" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}"><polyline points="${coords}" /></svg>`
  );
}

// -- lifecycle ------------------------------------------------------------------

export function renderLifecycle(view: LifecycleView): string {
  const rows = view.timeline
    .map(
      (e, i) =>
        `<li class="state-entry state-${escapeHtml(e.state)}" data-state="${escapeHtml(e.state)}">` +
        `<span class="idx">${i + 1}</span>` +
        `<span class="name">${escapeHtml(e.state)}</span>` +
        `<span class="at">${fmtSeconds(e.tNs)}</span></li>`,
    )
    .join("");
  const visibility = sparkline(
    view.batches.map((b: BatchPoint) => b.visibility),
    { min: 0, max: 1, cls: "visibility" },
  );
  const car = sparkline(
    view.batches.map((b: BatchPoint) => b.car),
    { cls: "car" },
  );
  const lastBatch = view.batches[view.batches.length - 1];
  const nonclassical =
    lastBatch && lastBatch.nonclassical !== null
      ? `<span class="flag ${lastBatch.nonclassical ? "nonclassical" : "classical"}">` +
        `${lastBatch.nonclassical ? "nonclassical" : "classical"}</span>`
      : "";
  const calRows = view.calibrations
    .map(
      (c) =>
        `<tr><td>${escapeHtml(c.node)}</td><td>${escapeHtml(c.procedure)}</td>` +
        `<td>${c.residual !== null ? c.residual.toExponential(2) : "-"}</td>` +
        `<td>${c.durationS !== null ? c.durationS.toFixed(2) + "s" : "-"}</td></tr>`,
    )
    .join("");
  const reason = view.rejectionReason ?? view.failureReason;
  const resubmit =
    view.currentState === "blocked" || view.currentState === "rejected"
      ? `<button class="resubmit" data-action="resubmit" data-request="${escapeHtml(view.requestId)}">resubmit</button>`
      : "";
  const ebits =
    view.currentState === "stored"
      ? `<p class="ebits">delivered <strong>${view.ebitsDelivered}</strong> ebits</p>`
      : `<p class="ebits">ebits so far: ${view.ebitsDelivered}</p>`;
  return (
    `<section class="lifecycle" data-request="${escapeHtml(view.requestId)}" ` +
    `data-current="${escapeHtml(view.currentState)}">` +
    `<h3>${escapeHtml(view.requestId)} <span class="current">${escapeHtml(view.currentState)}</span></h3>` +
    (reason ? `<p class="reason">${escapeHtml(reason)}</p>` : "") +
    resubmit +
    `<ol class="timeline">${rows}</ol>` +
    ebits +
    `<div class="charts"><figure><figcaption>visibility ${nonclassical}</figcaption>${visibility}</figure>` +
    `<figure><figcaption>CAR</figcaption>${car}</figure></div>` +
    `<table class="calibrations"><thead><tr><th>node</th><th>procedure</th>` +
    `<th>residual</th><th>duration</th></tr></thead><tbody>${calRows}</tbody></table>` +
    `</section>`
  );
}

/** The state sequence as it appears in rendered markup (for tests and
 * the replay property: rendered sequence == server-announced sequence). */
export function renderedStateSequence(html: string): string[] {
  const out: string[] = [];
  const re = /data-state="([^"]+)"/g;
  let m;
  while ((m = re.exec(html)) !== null) {
    out.push(m[1]!);
  }
  return out;
}

// -- topology --------------------------------------------------------------------

export function renderTopology(view: TopologyView): string {
  if (view.empty) {
    return `<section class="topology empty"><p>No topology yet.</p></section>`;
  }
  const W = 520;
  const H = 360;
  const cx = W / 2;
  const cy = H / 2;
  const r = Math.min(W, H) / 2 - 60;
  const pos = new Map<string, { x: number; y: number }>();
  view.nodes.forEach((n, i) => {
    const angle = (2 * Math.PI * i) / view.nodes.length - Math.PI / 2;
    pos.set(n.id, {
      x: cx + r * Math.cos(angle),
      y: cy + r * Math.sin(angle),
    });
  });
  const linkEls = view.links
    .map((l) => {
      const a = pos.get(l.a);
      const b = pos.get(l.b);
      if (!a || !b) return "";
      const mx = (a.x + b.x) / 2;
      const my = (a.y + b.y) / 2;
      const badge =
        `<g class="badge" data-link="${escapeHtml(l.id)}" data-occupied="${l.badge}">` +
        `<circle cx="${mx}" cy="${my}" r="11" class="${l.badge > 0 ? "busy" : "free"}"/>` +
        `<text x="${mx}" y="${my + 4}">${l.badge}</text>` +
        `<title>${escapeHtml(l.id)}: ${l.badge}/${l.totalWavelengths} channels ` +
        `(${l.occupiedChannels.map(escapeHtml).join(", ") || "none"})</title></g>`;
      return (
        `<line x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}" class="fiber"/>` + badge
      );
    })
    .join("");
  const nodeEls = view.nodes
    .map((n) => {
      const p = pos.get(n.id)!;
      const classes = ["node", `kind-${n.kind}`];
      if (n.quarantined) classes.push("quarantined");
      if (!n.online) classes.push("offline");
      const mark = n.quarantined ? `<text class="qmark" x="${p.x + 14}" y="${p.y - 12}">!</text>` : "";
      return (
        `<g class="${classes.join(" ")}" data-node="${escapeHtml(n.id)}" ` +
        `data-quarantined="${n.quarantined}">` +
        `<circle cx="${p.x}" cy="${p.y}" r="16"/>` +
        `<text x="${p.x}" y="${p.y + 30}">${escapeHtml(n.id)}</text>${mark}</g>`
      );
    })
    .join("");
  return (
    `<section class="topology"><svg width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">` +
    linkEls +
    nodeEls +
    `</svg></section>`
  );
}

/** Occupancy badges as rendered: link id -> occupied-channel count. */
export function renderedBadges(html: string): Record<string, number> {
  const out: Record<string, number> = {};
  const re = /data-link="([^"]+)" data-occupied="(\d+)"/g;
  let m;
  while ((m = re.exec(html)) !== null) {
    out[m[1]!] = Number(m[2]!);
  }
  return out;
}

// -- form ---------------------------------------------------------------------------

export function renderFormErrors(errors: Record<string, string>): string {
  const items = Object.entries(errors)
    .map(
      ([field, msg]) =>
        `<li class="error" data-field="${escapeHtml(field)}">${escapeHtml(msg)}</li>`,
    )
    .join("");
  return items ? `<ul class="form-errors">${items}</ul>` : "";
}
