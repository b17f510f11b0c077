import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { renderTrustPanel } from "../src/trustPanel.js";
import type { TrustPayload } from "../src/types.js";

const fixture = JSON.parse(
  readFileSync("fixtures/trust.json", "utf-8"),
) as TrustPayload;

describe("trust panel", () => {
  it("renders the recorded payload verbatim", () => {
    expect(renderTrustPanel(fixture)).toMatchSnapshot();
  });

  it("shows the level and the server-computed rates, unmodified", () => {
    const html = renderTrustPanel({
      ...fixture,
      level: "GatedAutonomy",
      override_rate: 0.02,
      intervention_accuracy: 0.94,
    });
    expect(html).toContain('data-level="GatedAutonomy"');
    expect(html).toContain('data-testid="override-rate">2%');
    expect(html).toContain('data-testid="intervention-accuracy">94%');
  });

  it("renders a placeholder when unavailable", () => {
    expect(renderTrustPanel(null)).toContain("unavailable");
  });
});
