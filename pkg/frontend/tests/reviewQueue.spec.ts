import { readFileSync } from "node:fs";
import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import {
  ReviewQueueController,
  isExpired,
  renderQueue,
  sortReviews,
} from "../src/reviewQueue.js";
import type { ReviewItem } from "../src/types.js";

const recorded = JSON.parse(
  readFileSync("fixtures/reviews.json", "utf-8"),
) as ReviewItem[];

const NOW = new Date("2025-01-06T00:00:00Z");

function item(id: string, deadline: string, status: ReviewItem["status"] = "pending"): ReviewItem {
  return {
    decision: {
      id,
      proposed_action: "promote_build",
      severity: "high_risk",
      confidence: 0.97,
      parity_gap: 0.01,
      compliance_flags: [],
      timestamp: "2025-01-05T12:00:00Z",
      rationale: `decision ${id}`,
    },
    enqueued_at: "2025-01-05T12:00:00Z",
    deadline,
    status,
    reviewer: null,
    reviewer_rationale: null,
    resolved_at: null,
  };
}

describe("queue ordering and styling", () => {
  it("sorts pending items by deadline ascending", () => {
    const items = [
      item("late", "2025-01-06T20:00:00Z"),
      item("soon", "2025-01-06T02:00:00Z"),
    ];
    expect(sortReviews(items).map((i) => i.decision.id)).toEqual(["soon", "late"]);
  });

  it("keeps resolved items after pending ones", () => {
    const items = [
      item("done", "2025-01-06T01:00:00Z", "approved"),
      item("todo", "2025-01-06T09:00:00Z"),
    ];
    expect(sortReviews(items).map((i) => i.decision.id)).toEqual(["todo", "done"]);
  });

  it("flags items past their deadline as expired", () => {
    expect(isExpired(item("x", "2025-01-05T23:00:00Z"), NOW)).toBe(true);
    expect(isExpired(item("x", "2025-01-06T01:00:00Z"), NOW)).toBe(false);
    expect(isExpired(item("x", "2025-01-07T00:00:00Z", "expired_auto_rejected"), NOW)).toBe(true);
  });

  it("renders expired styling and an empty state", () => {
    const html = renderQueue([item("x", "2025-01-05T23:00:00Z")], NOW);
    expect(html).toContain("expired");
    expect(renderQueue([], NOW)).toContain('data-testid="queue-empty"');
  });

  it("renders the recorded fixture without losing any item", () => {
    const html = renderQueue(recorded, NOW);
    for (const entry of recorded) {
      expect(html).toContain(`data-id="${entry.decision.id}"`);
    }
  });
});

describe("resolve flow", () => {
  let container: { innerHTML: string };

  beforeEach(() => {
    container = { innerHTML: "" };
  });

  function controllerWith(api: Partial<ApiClient>): ReviewQueueController {
    return new ReviewQueueController(
      api as ApiClient,
      container,
      "tester",
      () => {},
      () => NOW,
    );
  }

  it("requires a rationale before submitting", async () => {
    const resolveReview = vi.fn();
    const controller = controllerWith({ resolveReview } as unknown as Partial<ApiClient>);
    controller.setItems([item("d1", "2025-01-06T12:00:00Z")]);
    await controller.resolve("d1", "approve", "");
    expect(resolveReview).not.toHaveBeenCalled();
    expect(controller.getNotice()?.kind).toBe("error");
  });

  it("confirms with the server and updates the item", async () => {
    const confirmed = { ...item("d1", "2025-01-06T12:00:00Z", "approved"), reviewer: "tester" };
    const resolveReview = vi.fn().mockResolvedValue(confirmed);
    const controller = controllerWith({ resolveReview } as unknown as Partial<ApiClient>);
    controller.setItems([item("d1", "2025-01-06T12:00:00Z")]);
    await controller.resolve("d1", "approve", "looks good");
    expect(resolveReview).toHaveBeenCalledWith("d1", "approve", "tester", "looks good");
    expect(controller.getItems()[0]?.status).toBe("approved");
    expect(container.innerHTML).toContain("status-approved");
  });

  it("swallows a double submit into a single request", async () => {
    let release: (value: ReviewItem) => void = () => {};
    const pending = new Promise<ReviewItem>((resolve) => {
      release = resolve;
    });
    const resolveReview = vi.fn().mockReturnValue(pending);
    const controller = controllerWith({ resolveReview } as unknown as Partial<ApiClient>);
    controller.setItems([item("d1", "2025-01-06T12:00:00Z")]);
    const first = controller.resolve("d1", "approve", "ok");
    const second = controller.resolve("d1", "approve", "ok");
    release({ ...item("d1", "2025-01-06T12:00:00Z", "approved") });
    await Promise.all([first, second]);
    expect(resolveReview).toHaveBeenCalledTimes(1);
  });

  it("renders a conflict notice naming the winner on 409", async () => {
    const resolveReview = vi
      .fn()
      .mockRejectedValue(new ApiError(409, "conflict", "review for 'd1' already resolved: approved"));
    const listReviews = vi
      .fn()
      .mockResolvedValue([{ ...item("d1", "2025-01-06T12:00:00Z", "approved"), reviewer: "bob" }]);
    const controller = controllerWith({ resolveReview, listReviews } as unknown as Partial<ApiClient>);
    controller.setItems([item("d1", "2025-01-06T12:00:00Z")]);
    await controller.resolve("d1", "reject", "mine");
    expect(controller.getNotice()?.kind).toBe("conflict");
    expect(container.innerHTML).toContain("Already resolved");
    expect(listReviews).toHaveBeenCalled();
    expect(controller.getItems()[0]?.reviewer).toBe("bob");
  });

  it("renders an expiry notice on 410", async () => {
    const resolveReview = vi
      .fn()
      .mockRejectedValue(new ApiError(410, "expired", "past deadline"));
    const listReviews = vi.fn().mockResolvedValue([]);
    const controller = controllerWith({ resolveReview, listReviews } as unknown as Partial<ApiClient>);
    controller.setItems([item("d1", "2025-01-06T12:00:00Z")]);
    await controller.resolve("d1", "approve", "too late");
    expect(controller.getNotice()?.kind).toBe("expired");
    expect(container.innerHTML).toContain("Review window elapsed");
  });

  it("wires DOM events: rationale input enables buttons, click resolves", async () => {
    const confirmed = { ...item("d1", "2025-01-06T12:00:00Z", "approved") };
    const resolveReview = vi.fn().mockResolvedValue(confirmed);
    const root = document.createElement("div");
    document.body.appendChild(root);
    const controller = new ReviewQueueController(
      { resolveReview } as unknown as ApiClient,
      root,
      "tester",
      () => {},
      () => NOW,
    );
    controller.attach(root);
    controller.setItems([item("d1", "2025-01-06T12:00:00Z")]);

    const input = root.querySelector<HTMLInputElement>("input.rationale")!;
    const approve = root.querySelector<HTMLButtonElement>("button.approve")!;
    expect(approve.disabled).toBe(true);
    input.value = "verified by hand";
    input.dispatchEvent(new Event("input", { bubbles: true }));
    expect(approve.disabled).toBe(false);
    approve.dispatchEvent(new MouseEvent("click", { bubbles: true }));
    await vi.waitFor(() => expect(resolveReview).toHaveBeenCalledTimes(1));
    expect(resolveReview).toHaveBeenCalledWith("d1", "approve", "tester", "verified by hand");
  });
});
