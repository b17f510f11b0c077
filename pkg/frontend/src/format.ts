/** Display formatting only; the server owns every computed number. */

export function percentBadge(change: number | null | undefined): string {
  if (change === null || change === undefined) return "";
  const pct = Math.round(change * 100);
  return pct > 0 ? `+${pct}%` : `${pct}%`;
}

export function percentValue(fraction: number): string {
  return `${Math.round(fraction * 100)}%`;
}

export function hoursValue(hours: number): string {
  return `${Math.round(hours * 10) / 10} h`;
}

export function rateValue(perWeek: number): string {
  return `${Math.round(perWeek * 10) / 10}/wk`;
}

/** Time remaining until a deadline, clamped: past deadlines read "expired". */
export function countdown(deadlineIso: string, now: Date): string {
  const remainingMs = new Date(deadlineIso).getTime() - now.getTime();
  if (remainingMs <= 0) return "expired";
  const totalMinutes = Math.floor(remainingMs / 60_000);
  const hours = Math.floor(totalMinutes / 60);
  const minutes = totalMinutes % 60;
  return hours > 0 ? `${hours}h ${minutes}m` : `${minutes}m`;
}

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
