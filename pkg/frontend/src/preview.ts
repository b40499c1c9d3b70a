/**
 * Preview stream consumer: parses binary frames, enforces paint order, keeps
 * an fps estimate, and reconnects with backoff after socket drops.
 *
 * Ordering rule: a frame is delivered only if its revision is not older than
 * the newest revision seen; stale-revision frames are dropped on arrival.
 * Within a revision the server cycles frame indices, so arrival order is
 * paint order.
 */

import { decodeFrameHeader, framePayload, HEADER_BYTES } from "./protocol.js";

export interface PreviewFrame {
  revision: number;
  frameIndex: number;
  payload: Uint8Array;
}

/** The slice of the WebSocket surface the connection needs (swappable in tests). */
export interface SocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export interface PreviewOptions {
  socketFactory?: (url: string) => SocketLike;
  onFrame: (frame: PreviewFrame) => void;
  onConnection?: (state: "connecting" | "open" | "closed") => void;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
  now?: () => number;
  setTimeout?: (cb: () => void, ms: number) => ReturnType<typeof setTimeout>;
}

const FPS_WINDOW_MS = 2000;

export class PreviewConnection {
  lastRevision = -1;
  lastFrameIndex = -1;
  framesReceived = 0;
  framesDropped = 0;

  private socket: SocketLike | null = null;
  private closed = false;
  private backoffMs: number;
  private readonly deliveries: number[] = [];

  constructor(private readonly url: string, private readonly opts: PreviewOptions) {
    this.backoffMs = opts.reconnectBaseMs ?? 500;
  }

  connect(): void {
    if (this.closed) return;
    this.opts.onConnection?.("connecting");
    const factory = this.opts.socketFactory
      ?? ((u: string) => new WebSocket(u) as unknown as SocketLike);
    const socket = factory(this.url);
    socket.binaryType = "arraybuffer";
    socket.onopen = () => {
      this.backoffMs = this.opts.reconnectBaseMs ?? 500;
      this.opts.onConnection?.("open");
    };
    socket.onmessage = (ev) => this.accept(ev.data);
    socket.onerror = () => { /* close always follows */ };
    socket.onclose = () => {
      this.opts.onConnection?.("closed");
      if (!this.closed) {
        const wait = this.backoffMs;
        this.backoffMs = Math.min(this.backoffMs * 2,
                                  this.opts.reconnectMaxMs ?? 8000);
        (this.opts.setTimeout ?? globalThis.setTimeout)(() => this.connect(), wait);
      }
    };
    this.socket = socket;
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }

  /** Frames delivered per second over the trailing window. */
  get fps(): number {
    const now = (this.opts.now ?? Date.now)();
    while (this.deliveries.length && now - this.deliveries[0] > FPS_WINDOW_MS) {
      this.deliveries.shift();
    }
    if (this.deliveries.length < 2) return 0;
    const span = this.deliveries[this.deliveries.length - 1] - this.deliveries[0];
    return span > 0 ? (this.deliveries.length - 1) / (span / 1000) : 0;
  }

  private accept(data: ArrayBuffer): void {
    if (data.byteLength < HEADER_BYTES) return;
    const header = decodeFrameHeader(data);
    this.framesReceived += 1;
    if (header.revision < this.lastRevision) {
      this.framesDropped += 1;
      return;
    }
    this.lastRevision = header.revision;
    this.lastFrameIndex = header.frameIndex;
    this.deliveries.push((this.opts.now ?? Date.now)());
    this.opts.onFrame({
      revision: header.revision,
      frameIndex: header.frameIndex,
      payload: framePayload(data),
    });
  }
}
