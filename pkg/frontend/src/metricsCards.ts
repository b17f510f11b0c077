import { escapeHtml, hoursValue, percentBadge, percentValue, rateValue } from "./format.js";
import type { MetricsPayload, SnapshotPayload } from "./types.js";

interface CardSpec {
  key: string;
  label: string;
  value: (s: SnapshotPayload) => string;
  downIsGood: boolean;
}

const CARDS: CardSpec[] = [
  { key: "lead_time_mean_hours", label: "Lead time", value: (s) => hoursValue(s.lead_time_hours.mean), downIsGood: true },
  { key: "deploys_per_week", label: "Deploy frequency", value: (s) => rateValue(s.deploys_per_week), downIsGood: false },
  { key: "change_failure_rate", label: "Change failure rate", value: (s) => percentValue(s.change_failure_rate), downIsGood: true },
  { key: "mttr_hours", label: "MTTR", value: (s) => hoursValue(s.mttr_hours), downIsGood: true },
  { key: "coverage", label: "Coverage", value: (s) => percentValue(s.coverage), downIsGood: false },
  { key: "detection_rate", label: "Defect detection", value: (s) => percentValue(s.detection_rate), downIsGood: false },
  { key: "override_rate", label: "Override rate", value: (s) => percentValue(s.override_rate), downIsGood: true },
];

/**
 * Metric cards for the latest run: current value per card plus a delta badge
 * against the baseline arm. Deltas come straight from the server comparison;
 * with no baseline snapshot they are hidden entirely.
 */
export function renderMetricsCards(payload: MetricsPayload | null): string {
  if (payload === null) {
    return '<div class="cards empty" data-testid="metrics-empty">No runs yet. POST /api/v1/simulate or use the CLI.</div>';
  }
  const showDeltas = payload.baseline !== null;
  const cards = CARDS.map((card) => {
    const delta = payload.comparison.per_metric[card.key];
    let badge = "";
    if (showDeltas && delta && delta.percent_change !== null) {
      const text = percentBadge(delta.percent_change);
      const improved = card.downIsGood ? delta.percent_change < 0 : delta.percent_change > 0;
      badge = `<span class="badge ${improved ? "good" : "bad"}" data-testid="badge-${card.key}">${text}</span>`;
    }
    return `
      <div class="card" data-testid="card-${card.key}">
        <div class="card-label">${card.label}</div>
        <div class="card-value">${card.value(payload.current)}</div>
        ${badge}
      </div>`;
  }).join("\n");
  const meta = `${escapeHtml(payload.scenario)} · seed ${payload.seed} · run ${escapeHtml(payload.run_id)}`;
  return `<div class="cards" data-run="${escapeHtml(payload.run_id)}">${cards}\n<div class="cards-meta">${meta}</div></div>`;
}
