import { describe, expect, it, vi } from "vitest";

import { ApiClient, decodeFrameHeader, framePayload, HEADER_BYTES } from "../src/protocol.js";

function frame(revision: number, frameIndex: number, body: number[]): ArrayBuffer {
  const buffer = new ArrayBuffer(HEADER_BYTES + body.length);
  const view = new DataView(buffer);
  view.setUint32(0, revision, false);
  view.setUint32(4, frameIndex, false);
  new Uint8Array(buffer, HEADER_BYTES).set(body);
  return buffer;
}

describe("frame header", () => {
  it("decodes big-endian u32 pairs", () => {
    const header = decodeFrameHeader(frame(0x01020304, 7, [9, 9]));
    expect(header.revision).toBe(0x01020304);
    expect(header.frameIndex).toBe(7);
  });

  it("separates the payload from the header", () => {
    const payload = framePayload(frame(1, 2, [137, 80, 78, 71]));
    expect([...payload]).toEqual([137, 80, 78, 71]);
  });

  it("rejects short buffers", () => {
    expect(() => decodeFrameHeader(new ArrayBuffer(4))).toThrow(/too short/);
  });
});

describe("ApiClient.putCrops", () => {
  it("parses 422 field-level errors", async () => {
    const fetchMock = vi.fn(async () => new Response(
      JSON.stringify({ v: 1, errors: [{ field: "end.w", reason: "aspect", detail: "off" }] }),
      { status: 422 }));
    vi.stubGlobal("fetch", fetchMock);
    try {
      const client = new ApiClient("http://x");
      const result = await client.putCrops("abc", {
        v: 1,
        start: { x: 0, y: 0, w: 10, h: 10 },
        end: { x: 0, y: 0, w: 9, h: 10 },
      });
      expect(result.ok).toBe(false);
      if (!result.ok) {
        expect(result.errors[0].reason).toBe("aspect");
        expect(result.errors[0].field).toBe("end.w");
      }
      expect(fetchMock).toHaveBeenCalledWith(
        "http://x/session/abc/crops",
        expect.objectContaining({ method: "PUT" }));
    } finally {
      vi.unstubAllGlobals();
    }
  });

  it("treats 204 as success", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => new Response(null, { status: 204 })));
    try {
      const client = new ApiClient("http://x");
      const result = await client.putCrops("abc", {
        v: 1,
        start: { x: 0, y: 0, w: 10, h: 10 },
        end: { x: 0, y: 0, w: 10, h: 10 },
      });
      expect(result.ok).toBe(true);
    } finally {
      vi.unstubAllGlobals();
    }
  });

  it("builds a ws preview url from an http base", () => {
    const client = new ApiClient("http://127.0.0.1:8571");
    expect(client.previewUrl("s1")).toBe("ws://127.0.0.1:8571/session/s1/preview");
  });
});
