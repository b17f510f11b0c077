import { ApiClient } from "./api.js";
import { createPoller } from "./poller.js";
import { renderMetricsCards } from "./metricsCards.js";
import { renderTrustPanel } from "./trustPanel.js";
import { ReviewQueueController } from "./reviewQueue.js";

const REVIEW_POLL_MS = 5_000;
const METRICS_POLL_MS = 10_000;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function setStale(stale: boolean): void {
  el("banner").hidden = !stale;
  document.body.classList.toggle("stale", stale);
}

export function boot(base?: string): void {
  const params = new URLSearchParams(location.search);
  // ?api=http://host:port points the dashboard at a service on another origin
  const api = new ApiClient(base ?? params.get("api") ?? "");
  const reviewer = params.get("reviewer") ?? "dashboard-reviewer";
  el("reviewer-name").textContent = reviewer;

  const queue = new ReviewQueueController(api, el("queue"), reviewer, () => {
    void trustPoller.fetchNow();
    void auditPoller.fetchNow();
  });
  queue.attach(el("queue"));

  const reviewPoller = createPoller(
    () => api.listReviews(),
    (items) => {
      setStale(false);
      queue.setItems(items);
    },
    () => setStale(true),
    REVIEW_POLL_MS,
  );

  const trustPoller = createPoller(
    () => api.trust(),
    (trust) => {
      el("trust").innerHTML = renderTrustPanel(trust);
    },
    () => setStale(true),
    REVIEW_POLL_MS,
  );

  const metricsPoller = createPoller(
    () => api.metricsLatest(),
    (metrics) => {
      el("metrics").innerHTML = renderMetricsCards(metrics);
    },
    () => setStale(true),
    METRICS_POLL_MS,
  );

  const auditPoller = createPoller(
    () => api.auditVerify(),
    (audit) => {
      const badge = el("audit-badge");
      badge.textContent = audit.ok
        ? `audit ok · ${audit.length} entries`
        : `audit BROKEN at ${audit.broken_seq}`;
      badge.className = audit.ok ? "ok" : "broken";
    },
    () => setStale(true),
    METRICS_POLL_MS,
  );

  el("retry").addEventListener("click", () => {
    void reviewPoller.fetchNow();
    void trustPoller.fetchNow();
    void metricsPoller.fetchNow();
    void auditPoller.fetchNow();
  });

  reviewPoller.start();
  trustPoller.start();
  metricsPoller.start();
  auditPoller.start();
}

if (typeof document !== "undefined" && document.getElementById("queue")) {
  boot();
}
