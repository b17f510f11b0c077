import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { renderMetricsCards } from "../src/metricsCards.js";
import type { MetricsPayload } from "../src/types.js";

const fixture = JSON.parse(
  readFileSync("fixtures/metrics_latest.json", "utf-8"),
) as MetricsPayload;

describe("metrics cards against the recorded API fixture", () => {
  it("matches the snapshot verbatim", () => {
    expect(renderMetricsCards(fixture)).toMatchSnapshot();
  });

  it("shows the -71% lead-time badge for the 45h -> 13h run", () => {
    const html = renderMetricsCards(fixture);
    expect(html).toContain('data-testid="badge-lead_time_mean_hours"');
    expect(html).toContain("-71%");
  });

  it("renders the override rate as a plain percentage", () => {
    const html = renderMetricsCards(fixture);
    expect(html).toContain('data-testid="card-override_rate"');
    expect(html).toContain("2%");
  });

  it("hides all delta badges when there is no baseline", () => {
    const withoutBaseline = { ...fixture, baseline: null };
    const html = renderMetricsCards(withoutBaseline);
    expect(html).not.toContain('class="badge');
    // current values still render
    expect(html).toContain('data-testid="card-coverage"');
  });

  it("renders a placeholder before any run exists", () => {
    expect(renderMetricsCards(null)).toContain('data-testid="metrics-empty"');
  });
});
