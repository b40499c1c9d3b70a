/**
 * Crop rectangle editing: aspect-locked resize, translation, clamping.
 *
 * Every rectangle this module produces satisfies the server's crop-window
 * invariants (w/h matches the image aspect within tolerance, fully inside the
 * image, positive size), so nothing invalid can ever be posted.  Heights are
 * always derived from widths through the image aspect, never edited
 * independently.
 */

import type { CropRect, ImageSize } from "./protocol.js";

export const ASPECT_TOLERANCE = 1e-6;
export const MIN_WIDTH_PX = 16;

export type HandleId = "nw" | "ne" | "sw" | "se" | "body";
export type CropTarget = "from" | "to";

export interface HandleHit {
  target: CropTarget;
  handle: HandleId;
}

function heightFor(width: number, image: ImageSize): number {
  return width * (image.h / image.w);
}

export function fullImageCrop(image: ImageSize): CropRect {
  return { x: 0, y: 0, w: image.w, h: image.h };
}

export function isValidCrop(rect: CropRect, image: ImageSize,
                            tolerance: number = ASPECT_TOLERANCE): boolean {
  if (!(rect.w > 0) || !(rect.h > 0)) return false;
  if (Math.abs(rect.w / rect.h - image.w / image.h) > tolerance) return false;
  if (rect.x < 0 || rect.y < 0) return false;
  if (rect.x + rect.w > image.w || rect.y + rect.h > image.h) return false;
  return true;
}

/** Translate without resizing; the window never leaves the image. */
export function translateCrop(rect: CropRect, dx: number, dy: number,
                              image: ImageSize): CropRect {
  const x = Math.min(Math.max(rect.x + dx, 0), image.w - rect.w);
  const y = Math.min(Math.max(rect.y + dy, 0), image.h - rect.h);
  return { x, y, w: rect.w, h: rect.h };
}

/**
 * Resize by dragging a corner; the opposite corner stays anchored, the aspect
 * stays locked to the image, and the result is clamped inside the image.
 */
export function resizeCrop(rect: CropRect, handle: Exclude<HandleId, "body">,
                           pointerX: number, pointerY: number,
                           image: ImageSize,
                           minWidth: number = MIN_WIDTH_PX): CropRect {
  const anchorX = handle === "nw" || handle === "sw" ? rect.x + rect.w : rect.x;
  const anchorY = handle === "nw" || handle === "ne" ? rect.y + rect.h : rect.y;
  const signX = handle === "ne" || handle === "se" ? 1 : -1;
  const signY = handle === "sw" || handle === "se" ? 1 : -1;

  // Aspect-locked width: the largest aspect box fitting the pointer's spans,
  // so dragging one axis inward shrinks the window along that axis.
  const spanX = (pointerX - anchorX) * signX;
  const spanY = (pointerY - anchorY) * signY;
  let width = Math.min(spanX, spanY * (image.w / image.h));
  width = Math.max(width, minWidth);

  // Clamp so the anchored corner keeps the whole window inside the image.
  const maxWidthX = signX > 0 ? image.w - anchorX : anchorX;
  const maxHeightY = signY > 0 ? image.h - anchorY : anchorY;
  width = Math.min(width, maxWidthX, maxHeightY * (image.w / image.h));
  width = Math.max(width, Math.min(minWidth, maxWidthX));
  let height = heightFor(width, image);

  const x = signX > 0 ? anchorX : anchorX - width;
  const y = signY > 0 ? anchorY : anchorY - height;
  // Guard against float drift at the far edges.
  return translateCrop({ x, y, w: width, h: height }, 0, 0, image);
}

const HANDLE_RADIUS = 8;

function nearCorner(px: number, py: number, cx: number, cy: number,
                    radius: number): boolean {
  return Math.abs(px - cx) <= radius && Math.abs(py - cy) <= radius;
}

export function hitTestRect(rect: CropRect, px: number, py: number,
                            radius: number = HANDLE_RADIUS): HandleId | null {
  const corners: Array<[Exclude<HandleId, "body">, number, number]> = [
    ["nw", rect.x, rect.y],
    ["ne", rect.x + rect.w, rect.y],
    ["sw", rect.x, rect.y + rect.h],
    ["se", rect.x + rect.w, rect.y + rect.h],
  ];
  for (const [handle, cx, cy] of corners) {
    if (nearCorner(px, py, cx, cy, radius)) return handle;
  }
  if (px >= rect.x && px <= rect.x + rect.w && py >= rect.y && py <= rect.y + rect.h) {
    return "body";
  }
  return null;
}

interface ActiveDrag {
  target: CropTarget;
  handle: HandleId;
  startRect: CropRect;
  startX: number;
  startY: number;
}

/**
 * The two crop windows (FROM and TO) plus the in-flight drag, if any.  All
 * edits funnel through pointer events here; `onChange` fires with the updated
 * window after every mutation and only ever sees valid rectangles.
 */
export class CropHandleState {
  from: CropRect;
  to: CropRect;
  private active: ActiveDrag | null = null;

  constructor(
    public readonly image: ImageSize,
    from?: CropRect,
    to?: CropRect,
    private readonly onChange?: (target: CropTarget, rect: CropRect) => void,
  ) {
    this.from = from ?? fullImageCrop(image);
    this.to = to ?? fullImageCrop(image);
  }

  get dragging(): boolean {
    return this.active !== null;
  }

  rectFor(target: CropTarget): CropRect {
    return target === "from" ? this.from : this.to;
  }

  setRect(target: CropTarget, rect: CropRect): void {
    if (!isValidCrop(rect, this.image)) {
      throw new Error(`attempted to set an invalid ${target} crop`);
    }
    if (target === "from") this.from = rect;
    else this.to = rect;
    this.onChange?.(target, rect);
  }

  /** TO is checked before FROM so the target window wins overlapping grabs. */
  hitTest(px: number, py: number): HandleHit | null {
    for (const target of ["to", "from"] as CropTarget[]) {
      const handle = hitTestRect(this.rectFor(target), px, py);
      if (handle) return { target, handle };
    }
    return null;
  }

  pointerDown(px: number, py: number): HandleHit | null {
    const hit = this.hitTest(px, py);
    if (hit) {
      this.active = {
        target: hit.target,
        handle: hit.handle,
        startRect: { ...this.rectFor(hit.target) },
        startX: px,
        startY: py,
      };
    }
    return hit;
  }

  pointerMove(px: number, py: number): CropRect | null {
    if (!this.active) return null;
    const { target, handle, startRect, startX, startY } = this.active;
    const next = handle === "body"
      ? translateCrop(startRect, px - startX, py - startY, this.image)
      : resizeCrop(startRect, handle, px, py, this.image);
    this.setRect(target, next);
    return next;
  }

  pointerUp(): void {
    this.active = null;
  }
}
