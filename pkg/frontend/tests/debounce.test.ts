import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { debounce } from "../src/debounce.js";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("a rapid 20-event drag produces at most one call per 100 ms window", () => {
    const calls: number[] = [];
    const push = debounce((value: number) => calls.push(value), 100);
    for (let i = 0; i < 20; i += 1) {
      push.call(i);
      vi.advanceTimersByTime(10);  // 20 events over 200 ms
    }
    vi.advanceTimersByTime(200);
    expect(calls.length).toBeLessThanOrEqual(3);  // <= 1 per 100 ms window
    expect(calls.at(-1)).toBe(19);                // latest state always delivered
  });

  it("fires no later than the wait after the first pending call", () => {
    const calls: number[] = [];
    const push = debounce((value: number) => calls.push(value), 100);
    push.call(1);
    vi.advanceTimersByTime(99);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([1]);
  });

  it("flush delivers the pending call immediately", () => {
    const calls: number[] = [];
    const push = debounce((value: number) => calls.push(value), 100);
    push.call(7);
    push.flush();
    expect(calls).toEqual([7]);
    expect(push.pending()).toBe(false);
  });

  it("cancel drops the pending call", () => {
    const calls: number[] = [];
    const push = debounce((value: number) => calls.push(value), 100);
    push.call(7);
    push.cancel();
    vi.advanceTimersByTime(500);
    expect(calls).toEqual([]);
  });
});
