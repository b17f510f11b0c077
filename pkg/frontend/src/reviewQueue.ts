import { ApiClient, ApiError } from "./api.js";
import { countdown, escapeHtml } from "./format.js";
import type { ReviewItem } from "./types.js";

/** Pending items first, ordered by deadline ascending; resolved ones trail. */
export function sortReviews(items: ReviewItem[]): ReviewItem[] {
  const rank = (item: ReviewItem) => (item.status === "pending" ? 0 : 1);
  return [...items].sort((a, b) => {
    const byRank = rank(a) - rank(b);
    if (byRank !== 0) return byRank;
    return a.deadline.localeCompare(b.deadline);
  });
}

export function isExpired(item: ReviewItem, now: Date): boolean {
  return (
    item.status === "expired_auto_rejected" ||
    (item.status === "pending" && new Date(item.deadline).getTime() <= now.getTime())
  );
}

export function reviewItemHtml(item: ReviewItem, now: Date): string {
  const d = item.decision;
  const expired = isExpired(item, now);
  const classes = ["review", `status-${item.status}`];
  if (expired) classes.push("expired");
  const resolvedNote =
    item.status !== "pending"
      ? `<div class="resolved-note">${escapeHtml(item.status)}${
          item.reviewer ? ` by ${escapeHtml(item.reviewer)}` : ""
        }</div>`
      : "";
  const actions =
    item.status === "pending" && !expired
      ? `
        <div class="actions">
          <input type="text" class="rationale" placeholder="rationale (required)" data-id="${escapeHtml(d.id)}">
          <button class="approve" data-id="${escapeHtml(d.id)}" disabled>Approve</button>
          <button class="reject" data-id="${escapeHtml(d.id)}" disabled>Reject</button>
        </div>`
      : "";
  return `
    <li class="${classes.join(" ")}" data-id="${escapeHtml(d.id)}" data-status="${item.status}">
      <div class="review-head">
        <span class="action">${escapeHtml(d.proposed_action)}</span>
        <span class="severity ${d.severity}">${escapeHtml(d.severity)}</span>
        <span class="countdown" data-testid="countdown-${escapeHtml(d.id)}">${countdown(item.deadline, now)}</span>
      </div>
      <div class="review-body">
        <span class="confidence">confidence ${d.confidence.toFixed(3)}</span>
        <span class="parity">parity gap ${d.parity_gap.toFixed(3)}</span>
      </div>
      <div class="rationale-text">${escapeHtml(d.rationale)}</div>
      ${resolvedNote}
      ${actions}
    </li>`;
}

export function renderQueue(items: ReviewItem[], now: Date): string {
  if (items.length === 0) {
    return '<div class="queue-empty" data-testid="queue-empty">No reviews waiting. All clear.</div>';
  }
  const rows = sortReviews(items)
    .map((item) => reviewItemHtml(item, now))
    .join("\n");
  return `<ul class="queue">${rows}</ul>`;
}

export interface QueueNotice {
  kind: "conflict" | "expired" | "error" | "success";
  message: string;
}

/**
 * Review queue controller: renders the list and drives the resolve flow.
 *
 * Resolution is optimistic: the row is marked in flight (buttons disabled, so
 * a double click cannot fire twice) and the item leaves the pending list on
 * server confirmation. A 409 reloads the queue and surfaces who won; a 410
 * surfaces the expiry. Rationale is required before the buttons enable.
 */
export class ReviewQueueController {
  private items: ReviewItem[] = [];
  private inFlight = new Set<string>();
  private notice: QueueNotice | null = null;

  constructor(
    private api: ApiClient,
    private container: { innerHTML: string },
    private reviewer: string,
    private onResolved: () => void = () => {},
    private now: () => Date = () => new Date(),
  ) {}

  setItems(items: ReviewItem[]): void {
    this.items = items;
    this.render();
  }

  getItems(): ReviewItem[] {
    return this.items;
  }

  getNotice(): QueueNotice | null {
    return this.notice;
  }

  render(): void {
    const noticeHtml = this.notice
      ? `<div class="notice ${this.notice.kind}" data-testid="notice">${escapeHtml(this.notice.message)}</div>`
      : "";
    this.container.innerHTML = noticeHtml + renderQueue(this.items, this.now());
  }

  /** Wire events on a real DOM container (delegation; container must be an Element). */
  attach(root: HTMLElement): void {
    root.addEventListener("input", (event) => {
      const target = event.target as HTMLInputElement;
      if (!target.classList?.contains("rationale")) return;
      const id = target.dataset.id ?? "";
      const enabled = target.value.trim().length > 0 && !this.inFlight.has(id);
      for (const button of root.querySelectorAll<HTMLButtonElement>(
        `button[data-id="${CSS.escape(id)}"]`,
      )) {
        button.disabled = !enabled;
      }
    });
    root.addEventListener("click", (event) => {
      const target = event.target as HTMLButtonElement;
      if (target.tagName !== "BUTTON") return;
      const id = target.dataset.id;
      if (!id) return;
      const resolution = target.classList.contains("approve") ? "approve" : "reject";
      const input = root.querySelector<HTMLInputElement>(
        `input.rationale[data-id="${CSS.escape(id)}"]`,
      );
      void this.resolve(id, resolution, input?.value.trim() ?? "");
    });
  }

  async resolve(id: string, resolution: "approve" | "reject", rationale: string): Promise<void> {
    if (!rationale) {
      this.notice = { kind: "error", message: "A rationale is required." };
      this.render();
      return;
    }
    if (this.inFlight.has(id)) return; // double submit guard
    this.inFlight.add(id);
    // optimistic: the item leaves the pending list immediately
    const snapshot = this.items;
    this.items = this.items.map((item) =>
      item.decision.id === id
        ? { ...item, status: resolution === "approve" ? "approved" : "rejected" }
        : item,
    );
    this.render();
    try {
      const confirmed = await this.api.resolveReview(id, resolution, this.reviewer, rationale);
      this.items = this.items.map((item) =>
        item.decision.id === id ? confirmed : item,
      );
      this.notice = { kind: "success", message: `${id}: ${confirmed.status}` };
      this.onResolved();
    } catch (err) {
      this.items = snapshot; // roll the optimistic update back
      if (err instanceof ApiError && err.status === 409) {
        this.notice = {
          kind: "conflict",
          message: `Already resolved by someone else: ${err.message}`,
        };
        await this.reload();
      } else if (err instanceof ApiError && err.status === 410) {
        this.notice = { kind: "expired", message: `Review window elapsed: ${err.message}` };
        await this.reload();
      } else {
        this.notice = { kind: "error", message: String(err) };
      }
    } finally {
      this.inFlight.delete(id);
      this.render();
    }
  }

  private async reload(): Promise<void> {
    try {
      this.items = await this.api.listReviews();
    } catch {
      // keep the stale list; the poller will refresh it
    }
  }
}
