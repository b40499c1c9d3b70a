/** Single UI store; every state mutation funnels through update(). */

import type { CropRect, SessionState } from "./protocol.js";

export interface UiState {
  sessionId: string | null;
  sessionState: SessionState | "idle";
  statusDetail: string;
  imageW: number;
  imageH: number;
  from: CropRect | null;
  to: CropRect | null;
  frames: number;
  revision: number;
  fps: number;
  connection: "connecting" | "open" | "closed" | "idle";
  depthOverlay: boolean;
  exporting: boolean;
  cropError: string | null;
}

export const initialState: UiState = {
  sessionId: null,
  sessionState: "idle",
  statusDetail: "",
  imageW: 0,
  imageH: 0,
  from: null,
  to: null,
  frames: 45,
  revision: 0,
  fps: 0,
  connection: "idle",
  depthOverlay: false,
  exporting: false,
  cropError: null,
};

export type Listener = (state: UiState) => void;

export class Store {
  private state: UiState = { ...initialState };
  private listeners = new Set<Listener>();

  get(): UiState {
    return this.state;
  }

  update(patch: Partial<UiState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    listener(this.state);
    return () => this.listeners.delete(listener);
  }
}
