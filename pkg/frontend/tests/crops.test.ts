import { describe, expect, it } from "vitest";

import {
  CropHandleState,
  fullImageCrop,
  hitTestRect,
  isValidCrop,
  resizeCrop,
  translateCrop,
} from "../src/crops.js";
import type { CropRect, ImageSize } from "../src/protocol.js";

/** Independent replica of the server-side crop rules (aspect, bounds, size). */
function serverAccepts(rect: CropRect, image: ImageSize): boolean {
  if (!(rect.w > 0 && rect.h > 0)) return false;
  if (Math.abs(rect.w / rect.h - image.w / image.h) > 1e-6) return false;
  return rect.x >= 0 && rect.y >= 0
    && rect.x + rect.w <= image.w && rect.y + rect.h <= image.h;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0; a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("geometry primitives", () => {
  const image: ImageSize = { w: 640, h: 480 };

  it("translate clamps to the image bounds", () => {
    const rect = { x: 100, y: 100, w: 320, h: 240 };
    expect(translateCrop(rect, -500, -500, image)).toEqual({ x: 0, y: 0, w: 320, h: 240 });
    expect(translateCrop(rect, 9000, 9000, image)).toEqual({ x: 320, y: 240, w: 320, h: 240 });
  });

  it("corner resize keeps the opposite corner anchored and the aspect locked", () => {
    const rect = { x: 100, y: 100, w: 320, h: 240 };
    const half = resizeCrop(rect, "se", 100 + 160, 100 + 999, image);
    expect(half.x).toBeCloseTo(100, 9);
    expect(half.y).toBeCloseTo(100, 9);
    expect(half.w).toBeCloseTo(160, 9);
    expect(half.w / half.h).toBeCloseTo(image.w / image.h, 9);
  });

  it("dragging a corner to half the image width posts w = imgWidth/2", () => {
    const state = new CropHandleState(image);
    state.pointerDown(image.w, image.h);           // grab the SE corner of TO
    state.pointerMove(image.w / 2, image.h);       // drag to half width
    expect(state.to.w).toBeCloseTo(image.w / 2, 6);
    expect(state.to.w / state.to.h).toBeCloseTo(image.w / image.h, 9);
  });

  it("dragging outside the image clamps instead of producing invalid state", () => {
    const state = new CropHandleState(image, undefined,
                                      { x: 160, y: 120, w: 320, h: 240 });
    state.pointerDown(160 + 100, 120 + 100);       // grab the TO body
    state.pointerMove(-5000, -5000);
    expect(state.to.x).toBe(0);
    expect(state.to.y).toBe(0);
    expect(serverAccepts(state.to, image)).toBe(true);
  });

  it("hit testing finds corners before the body", () => {
    const rect = { x: 10, y: 10, w: 100, h: 75 };
    expect(hitTestRect(rect, 10, 10)).toBe("nw");
    expect(hitTestRect(rect, 110, 85)).toBe("se");
    expect(hitTestRect(rect, 60, 40)).toBe("body");
    expect(hitTestRect(rect, 500, 500)).toBeNull();
  });

  it("setRect refuses invalid rectangles", () => {
    const state = new CropHandleState(image);
    expect(() => state.setRect("to", { x: -1, y: 0, w: 320, h: 240 })).toThrow();
    expect(() => state.setRect("to", { x: 0, y: 0, w: 320, h: 100 })).toThrow();
  });
});

describe("synthesized drag sequences never post an invalid rectangle", () => {
  it.each([[1], [2], [3]])("1000 events, seed %i", (seed) => {
    const rand = mulberry32(seed * 7919);
    const image: ImageSize = {
      w: 64 + Math.floor(rand() * 936),
      h: 64 + Math.floor(rand() * 936),
    };
    const posted: CropRect[] = [];
    const state = new CropHandleState(image, undefined, undefined,
                                      (_target, rect) => posted.push({ ...rect }));
    // shrink TO a bit so body drags are possible
    state.setRect("to", resizeCrop(fullImageCrop(image), "se",
                                   image.w * 0.7, image.h, image));

    let events = 0;
    while (events < 1000) {
      // random grab point, biased onto the TO rectangle's corners and body
      const corner = rand() < 0.5;
      const rect = rand() < 0.7 ? state.to : state.from;
      const px = corner
        ? (rand() < 0.5 ? rect.x : rect.x + rect.w) + (rand() - 0.5) * 6
        : rect.x + rand() * rect.w;
      const py = corner
        ? (rand() < 0.5 ? rect.y : rect.y + rect.h) + (rand() - 0.5) * 6
        : rect.y + rand() * rect.h;
      state.pointerDown(px, py);
      events += 1;
      const moves = 1 + Math.floor(rand() * 8);
      for (let m = 0; m < moves && events < 1000; m += 1) {
        // moves may wander far outside the image; clamping must hold
        state.pointerMove((rand() * 3 - 1) * image.w, (rand() * 3 - 1) * image.h);
        events += 1;
      }
      state.pointerUp();
    }

    expect(posted.length).toBeGreaterThan(200);
    for (const rect of posted) {
      expect(isValidCrop(rect, image)).toBe(true);
      expect(serverAccepts(rect, image)).toBe(true);
    }
  });
});
