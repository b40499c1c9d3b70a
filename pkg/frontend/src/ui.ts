/**
 * Canvas-based authoring surface: drag/resize the FROM and TO windows over
 * the input image, watch the live preview, toggle the depth overlay, export.
 */

import { CropHandleState } from "./crops.js";
import { debounce } from "./debounce.js";
import { PreviewConnection } from "./preview.js";
import { ApiClient, type CropRect, type EffectSpecDoc } from "./protocol.js";
import { Store } from "./store.js";

const FROM_COLOR = "#3787cf";
const TO_COLOR = "#ee7f0e";
const DEBOUNCE_MS = 100;
const STATUS_POLL_MS = 250;

interface Elements {
  fileInput: HTMLInputElement;
  editorCanvas: HTMLCanvasElement;
  previewCanvas: HTMLCanvasElement;
  banner: HTMLElement;
  fpsBadge: HTMLElement;
  revisionBadge: HTMLElement;
  exportButton: HTMLButtonElement;
  exportFrames: HTMLInputElement;
  depthToggle: HTMLInputElement;
  cropErrorBox: HTMLElement;
}

function grab(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

export function collectElements(): Elements {
  return {
    fileInput: grab("file-input") as HTMLInputElement,
    editorCanvas: grab("editor") as HTMLCanvasElement,
    previewCanvas: grab("preview") as HTMLCanvasElement,
    banner: grab("banner"),
    fpsBadge: grab("fps-badge"),
    revisionBadge: grab("revision-badge"),
    exportButton: grab("export-button") as HTMLButtonElement,
    exportFrames: grab("export-frames") as HTMLInputElement,
    depthToggle: grab("depth-toggle") as HTMLInputElement,
    cropErrorBox: grab("crop-errors"),
  };
}

export class App {
  private readonly client: ApiClient;
  readonly store = new Store();
  private crops: CropHandleState | null = null;
  private image: ImageBitmap | null = null;
  private depthImage: ImageBitmap | null = null;
  private preview: PreviewConnection | null = null;
  private pushCrops: ReturnType<typeof debounce<[]>>;
  private scale = 1;

  constructor(private readonly el: Elements, base = "") {
    this.client = new ApiClient(base);
    this.pushCrops = debounce(() => void this.putCrops(), DEBOUNCE_MS);
    this.wireEvents();
    this.store.subscribe(() => this.renderChrome());
  }

  // -- session ------------------------------------------------------------

  private wireEvents(): void {
    this.el.fileInput.addEventListener("change", () => {
      const file = this.el.fileInput.files?.[0];
      if (file) void this.startSession(file);
    });
    this.el.exportButton.addEventListener("click", () => void this.export());
    this.el.depthToggle.addEventListener("change", () => {
      this.store.update({ depthOverlay: this.el.depthToggle.checked });
      void this.refreshDepthOverlay();
    });
    const canvas = this.el.editorCanvas;
    canvas.addEventListener("pointerdown", (ev) => this.onPointerDown(ev));
    canvas.addEventListener("pointermove", (ev) => this.onPointerMove(ev));
    window.addEventListener("pointerup", () => this.onPointerUp());
  }

  async startSession(file: File): Promise<void> {
    this.store.update({ sessionState: "processing", statusDetail: "uploading" });
    this.image = await createImageBitmap(file);
    const form = new FormData();
    form.append("image", file, file.name || "image.png");
    const sessionId = await this.client.createSession(form);
    this.store.update({ sessionId });
    void this.pollStatus(sessionId);
  }

  private async pollStatus(sessionId: string): Promise<void> {
    for (;;) {
      const status = await this.client.status(sessionId);
      this.store.update({
        sessionState: status.state,
        statusDetail: status.progress.map((p) => p.stage).join(" > "),
        imageW: status.imageSize.w,
        imageH: status.imageSize.h,
        revision: status.revision,
        frames: status.spec.frames ?? 45,
      });
      if (status.state === "error") {
        this.store.update({ statusDetail: status.error ?? "pipeline failed" });
        return;
      }
      if (status.state === "ready") {
        this.onReady(status.spec, { w: status.imageSize.w, h: status.imageSize.h });
        return;
      }
      await new Promise((r) => setTimeout(r, STATUS_POLL_MS));
    }
  }

  private onReady(spec: EffectSpecDoc, image: { w: number; h: number }): void {
    // FROM starts as the whole image; TO follows the server's automatic
    // suggestion once it lands (the artist refines from there).
    this.crops = new CropHandleState(image, spec.start, spec.end, () => {
      this.drawEditor();
      this.pushCrops.call();
    });
    this.store.update({ from: this.crops.from, to: this.crops.to });
    this.drawEditor();
    this.connectPreview();
    void this.adoptAutocrop();
  }

  private async adoptAutocrop(): Promise<void> {
    const sessionId = this.store.get().sessionId;
    if (!sessionId || !this.crops) return;
    for (let attempt = 0; attempt < 120; attempt += 1) {
      const doc = await this.client.autocrop(sessionId);
      if (doc.state === "ready" && doc.crop) {
        if (!this.crops.dragging) {
          this.crops.setRect("to", doc.crop);
          this.store.update({ to: doc.crop });
        }
        return;
      }
      if (doc.state === "skipped") return;
      await new Promise((r) => setTimeout(r, 500));
    }
  }

  // -- crop editing ---------------------------------------------------------

  private toImageCoords(ev: PointerEvent): { x: number; y: number } {
    const rect = this.el.editorCanvas.getBoundingClientRect();
    return {
      x: (ev.clientX - rect.left) / this.scale,
      y: (ev.clientY - rect.top) / this.scale,
    };
  }

  private onPointerDown(ev: PointerEvent): void {
    if (!this.crops) return;
    const { x, y } = this.toImageCoords(ev);
    if (this.crops.pointerDown(x, y)) {
      this.el.editorCanvas.setPointerCapture(ev.pointerId);
    }
  }

  private onPointerMove(ev: PointerEvent): void {
    if (!this.crops || !this.crops.dragging) return;
    const { x, y } = this.toImageCoords(ev);
    this.crops.pointerMove(x, y);
    this.store.update({ from: this.crops.from, to: this.crops.to });
  }

  private onPointerUp(): void {
    if (this.crops?.dragging) {
      this.crops.pointerUp();
      this.pushCrops.flush();
    }
  }

  private async putCrops(): Promise<void> {
    const { sessionId, frames } = this.store.get();
    if (!sessionId || !this.crops) return;
    const spec: EffectSpecDoc = {
      v: 1,
      start: this.crops.from,
      end: this.crops.to,
      frames,
    };
    const result = await this.client.putCrops(sessionId, spec);
    if (result.ok) {
      this.store.update({ cropError: null });
    } else {
      const summary = result.errors
        .map((e) => `${e.field}: ${e.reason}`)
        .join("; ");
      this.store.update({ cropError: summary });
    }
  }

  // -- preview ----------------------------------------------------------------

  private connectPreview(): void {
    const sessionId = this.store.get().sessionId;
    if (!sessionId) return;
    this.preview = new PreviewConnection(this.client.previewUrl(sessionId), {
      onFrame: (frame) => {
        void this.paintPreview(frame.payload);
        this.store.update({
          revision: frame.revision,
          fps: Math.round((this.preview?.fps ?? 0) * 10) / 10,
        });
      },
      onConnection: (state) => this.store.update({ connection: state }),
    });
    this.preview.connect();
  }

  private async paintPreview(payload: Uint8Array): Promise<void> {
    const canvas = this.el.previewCanvas;
    const blob = new Blob([payload.slice().buffer], { type: "image/png" });
    const bitmap = await createImageBitmap(blob);
    canvas.width = bitmap.width;
    canvas.height = bitmap.height;
    canvas.getContext("2d")?.drawImage(bitmap, 0, 0);
  }

  // -- depth overlay ------------------------------------------------------------

  private async refreshDepthOverlay(): Promise<void> {
    const { sessionId, depthOverlay } = this.store.get();
    if (!depthOverlay || !sessionId) {
      this.depthImage = null;
      this.drawEditor();
      return;
    }
    const resp = await fetch(this.client.depthPngUrl(sessionId));
    if (resp.ok) {
      this.depthImage = await createImageBitmap(await resp.blob());
    }
    this.drawEditor();
  }

  // -- export ---------------------------------------------------------------------

  private async export(): Promise<void> {
    const { sessionId, exporting } = this.store.get();
    if (!sessionId || exporting) return;
    this.store.update({ exporting: true });
    try {
      const frames = Math.max(1, Number(this.el.exportFrames.value) || 45);
      const payload = await this.client.exportZip(sessionId, frames);
      const url = URL.createObjectURL(new Blob([payload], { type: "application/zip" }));
      const link = document.createElement("a");
      link.href = url;
      link.download = `kenburns-${frames}f.zip`;
      link.click();
      URL.revokeObjectURL(url);
    } finally {
      this.store.update({ exporting: false });
    }
  }

  // -- drawing ------------------------------------------------------------------------

  private drawEditor(): void {
    const canvas = this.el.editorCanvas;
    const ctx = canvas.getContext("2d");
    if (!ctx || !this.image || !this.crops) return;
    const maxWidth = 560;
    this.scale = Math.min(1, maxWidth / this.image.width);
    canvas.width = Math.round(this.image.width * this.scale);
    canvas.height = Math.round(this.image.height * this.scale);
    ctx.drawImage(this.image, 0, 0, canvas.width, canvas.height);
    if (this.depthImage && this.store.get().depthOverlay) {
      ctx.globalAlpha = 0.5;
      ctx.drawImage(this.depthImage, 0, 0, canvas.width, canvas.height);
      ctx.globalAlpha = 1.0;
    }
    this.drawWindow(ctx, this.crops.from, FROM_COLOR, "FROM");
    this.drawWindow(ctx, this.crops.to, TO_COLOR, "TO");
  }

  private drawWindow(ctx: CanvasRenderingContext2D, rect: CropRect,
                     color: string, label: string): void {
    const s = this.scale;
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.strokeRect(rect.x * s, rect.y * s, rect.w * s, rect.h * s);
    ctx.fillStyle = color;
    for (const [cx, cy] of [
      [rect.x, rect.y], [rect.x + rect.w, rect.y],
      [rect.x, rect.y + rect.h], [rect.x + rect.w, rect.y + rect.h],
    ]) {
      ctx.fillRect(cx * s - 4, cy * s - 4, 8, 8);
    }
    ctx.font = "12px sans-serif";
    ctx.fillText(label, rect.x * s + 4, rect.y * s + 14);
  }

  private renderChrome(): void {
    const state = this.store.get();
    this.el.fpsBadge.textContent = `${state.fps.toFixed(1)} fps`;
    this.el.revisionBadge.textContent = `rev ${state.revision}`;
    const banner = state.sessionState === "error"
      ? `error: ${state.statusDetail}`
      : state.connection === "closed"
        ? "preview disconnected, retrying..."
        : state.sessionState === "processing"
          ? `preparing: ${state.statusDetail}`
          : "";
    this.el.banner.textContent = banner;
    this.el.banner.style.display = banner ? "block" : "none";
    const ready = state.sessionState === "ready" && !state.exporting;
    this.el.exportButton.disabled = !ready;
    this.el.exportButton.title = ready ? "" : "available once the scene is extended";
    this.el.cropErrorBox.textContent = state.cropError ?? "";
    this.el.cropErrorBox.style.display = state.cropError ? "block" : "none";
  }
}

export function boot(): App {
  return new App(collectElements());
}
