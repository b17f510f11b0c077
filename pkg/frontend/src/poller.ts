/**
 * Interval polling with overlap protection.
 *
 * Calls the fetcher on an interval; successful results go to onData, failures
 * to onError (previous data stays on screen, callers mark it stale). A fetch
 * already in flight is never overlapped.
 */

export interface Poller {
  start(): void;
  stop(): void;
  fetchNow(): Promise<void>;
  destroy(): void;
}

export function createPoller<T>(
  fetcher: () => Promise<T>,
  onData: (data: T) => void,
  onError: (err: unknown) => void,
  intervalMs: number,
): Poller {
  let timer: ReturnType<typeof setInterval> | null = null;
  let inFlight = false;
  let destroyed = false;

  async function tick(): Promise<void> {
    if (inFlight || destroyed) return;
    inFlight = true;
    try {
      const data = await fetcher();
      if (!destroyed) onData(data);
    } catch (err) {
      if (!destroyed) onError(err);
    } finally {
      inFlight = false;
    }
  }

  return {
    start() {
      if (destroyed || timer !== null) return;
      void tick();
      timer = setInterval(() => void tick(), intervalMs);
    },
    stop() {
      if (timer !== null) {
        clearInterval(timer);
        timer = null;
      }
    },
    fetchNow() {
      return tick();
    },
    destroy() {
      destroyed = true;
      if (timer !== null) {
        clearInterval(timer);
        timer = null;
      }
    },
  };
}
