/**
 * Typed client layer for the preview service. Everything the UI says to the
 * backend goes through here; no other module touches fetch or URLs.
 */

export interface CropRect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface ImageSize {
  w: number;
  h: number;
}

export interface EffectSpecDoc {
  v: 1;
  start: CropRect;
  end: CropRect;
  frames?: number;
}

export interface ProgressEntry {
  stage: string;
}

export type SessionState = "processing" | "ready" | "error";

export interface StatusDoc {
  v: 1;
  state: SessionState;
  revision: number;
  progress: ProgressEntry[];
  spec: EffectSpecDoc;
  autocropState: "pending" | "ready" | "skipped";
  imageSize: ImageSize;
  error?: string;
}

export interface CropErrorEntry {
  field: string;
  reason: "aspect" | "bounds" | "size";
  detail: string;
}

export type PutCropsResult =
  | { ok: true }
  | { ok: false; errors: CropErrorEntry[] };

export interface AutocropDoc {
  v: 1;
  state: "pending" | "ready" | "skipped";
  crop?: CropRect;
}

/** Binary preview frame header: two big-endian u32s, then the PNG payload. */
export const HEADER_BYTES = 8;

export interface FrameHeader {
  revision: number;
  frameIndex: number;
}

export function decodeFrameHeader(buffer: ArrayBuffer): FrameHeader {
  if (buffer.byteLength < HEADER_BYTES) {
    throw new Error(`preview frame too short: ${buffer.byteLength} bytes`);
  }
  const view = new DataView(buffer);
  return {
    revision: view.getUint32(0, false),
    frameIndex: view.getUint32(4, false),
  };
}

export function framePayload(buffer: ArrayBuffer): Uint8Array {
  return new Uint8Array(buffer, HEADER_BYTES);
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async createSession(form: FormData): Promise<string> {
    const resp = await fetch(this.url("/session"), { method: "POST", body: form });
    if (resp.status !== 201) {
      throw new Error(`session creation failed: ${resp.status}`);
    }
    const doc = (await resp.json()) as { v: 1; sessionId: string };
    return doc.sessionId;
  }

  async status(sessionId: string): Promise<StatusDoc> {
    const resp = await fetch(this.url(`/session/${sessionId}/status`));
    if (!resp.ok) {
      throw new Error(`status failed: ${resp.status}`);
    }
    return (await resp.json()) as StatusDoc;
  }

  async putCrops(sessionId: string, spec: EffectSpecDoc): Promise<PutCropsResult> {
    const resp = await fetch(this.url(`/session/${sessionId}/crops`), {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    });
    if (resp.status === 204) {
      return { ok: true };
    }
    if (resp.status === 422) {
      const doc = (await resp.json()) as { v: 1; errors: CropErrorEntry[] };
      return { ok: false, errors: doc.errors };
    }
    throw new Error(`crops update failed: ${resp.status}`);
  }

  async autocrop(sessionId: string): Promise<AutocropDoc> {
    const resp = await fetch(this.url(`/session/${sessionId}/autocrop`));
    if (!resp.ok) {
      throw new Error(`autocrop failed: ${resp.status}`);
    }
    return (await resp.json()) as AutocropDoc;
  }

  async exportZip(sessionId: string, frames: number): Promise<ArrayBuffer> {
    const resp = await fetch(this.exportUrl(sessionId, frames));
    if (!resp.ok) {
      throw new Error(`export failed: ${resp.status}`);
    }
    return await resp.arrayBuffer();
  }

  exportUrl(sessionId: string, frames: number): string {
    return this.url(`/session/${sessionId}/export?frames=${frames}`);
  }

  depthPngUrl(sessionId: string): string {
    return this.url(`/session/${sessionId}/depth.png`);
  }

  previewUrl(sessionId: string): string {
    const base = this.base || (typeof location !== "undefined" ? location.origin : "");
    return `${base.replace(/^http/, "ws")}/session/${sessionId}/preview`;
  }
}
