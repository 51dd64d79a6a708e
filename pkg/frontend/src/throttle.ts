/** Trailing-edge rate limiter: at most one call per interval, never drops
the latest value (the final position after a camera move always lands). */

export function makeThrottle<T>(
  intervalMs: number,
  emit: (value: T) => void,
  now: () => number = () => performance.now(),
  schedule: (fn: () => void, ms: number) => unknown = setTimeout,
): (value: T) => void {
  let lastSent = -Infinity;
  let pending: { value: T } | null = null;
  let timerArmed = false;

  const flush = () => {
    timerArmed = false;
    if (pending) {
      const { value } = pending;
      pending = null;
      lastSent = now();
      emit(value);
    }
  };

  return (value: T) => {
    const t = now();
    if (t - lastSent >= intervalMs && !timerArmed) {
      lastSent = t;
      emit(value);
      return;
    }
    pending = { value };
    if (!timerArmed) {
      timerArmed = true;
      schedule(flush, Math.max(0, intervalMs - (t - lastSent)));
    }
  };
}
