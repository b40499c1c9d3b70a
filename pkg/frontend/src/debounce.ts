/**
 * Trailing debounce with a bounded delay: at most one invocation per window,
 * always with the latest arguments, never later than `waitMs` after the first
 * pending call.  This is what keeps rapid drags down to one PUT per window
 * while still delivering the final rectangle promptly.
 */

export interface Debounced<T extends unknown[]> {
  call: (...args: T) => void;
  flush: () => void;
  cancel: () => void;
  pending: () => boolean;
}

export function debounce<T extends unknown[]>(
  fn: (...args: T) => void,
  waitMs: number,
  timers: {
    setTimeout: (cb: () => void, ms: number) => ReturnType<typeof setTimeout>;
    clearTimeout: (id: ReturnType<typeof setTimeout>) => void;
  } = globalThis,
): Debounced<T> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let latest: T | null = null;

  const fire = () => {
    timer = null;
    if (latest !== null) {
      const args = latest;
      latest = null;
      fn(...args);
    }
  };

  return {
    call: (...args: T) => {
      latest = args;
      if (timer === null) {
        timer = timers.setTimeout(fire, waitMs);
      }
    },
    flush: () => {
      if (timer !== null) {
        timers.clearTimeout(timer);
        fire();
      }
    },
    cancel: () => {
      if (timer !== null) {
        timers.clearTimeout(timer);
        timer = null;
      }
      latest = null;
    },
    pending: () => timer !== null,
  };
}
