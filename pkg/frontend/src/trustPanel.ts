import { escapeHtml, percentValue } from "./format.js";
import type { TrustPayload } from "./types.js";

/** Trust panel renders the /trust payload verbatim; no client-side recomputation. */
export function renderTrustPanel(trust: TrustPayload | null): string {
  if (trust === null) {
    return '<div class="trust empty">trust state unavailable</div>';
  }
  const transitions = trust.recent_transitions
    .slice(-5)
    .reverse()
    .map(
      (t) =>
        `<li>${escapeHtml(t.from_level)} &rarr; ${escapeHtml(t.to_level)}: ${escapeHtml(t.reason)}</li>`,
    )
    .join("");
  return `
    <div class="trust" data-testid="trust-panel" data-level="${escapeHtml(trust.level)}">
      <div class="trust-level">${escapeHtml(trust.level)}</div>
      <dl>
        <dt>Override rate</dt><dd data-testid="override-rate">${percentValue(trust.override_rate)}</dd>
        <dt>Intervention accuracy</dt><dd data-testid="intervention-accuracy">${percentValue(trust.intervention_accuracy)}</dd>
        <dt>Criticals in window</dt><dd>${trust.critical_violations_in_window}</dd>
        <dt>Window fill</dt><dd>${trust.window.length}/${trust.window_size}</dd>
      </dl>
      <ul class="transitions">${transitions || "<li>no transitions yet</li>"}</ul>
    </div>`;
}
