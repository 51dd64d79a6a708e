/** WebSocket client: validates every inbound snapshot, reconnects with
exponential backoff, and exposes a typed send for control frames. */

import { validateSnapshot, SchemaViolation } from "./validate";
import type { ControlMessage, ErrorReply, HistoryReply, Snapshot } from "./types";

export interface WsEvents {
  onSnapshot(snap: Snapshot): void;
  onHistory?(reply: HistoryReply): void;
  onServerError?(reply: ErrorReply): void;
  onStatus?(connected: boolean): void;
  onBadSnapshot?(err: SchemaViolation): void;
}

const BACKOFF_BASE_MS = 500;
const BACKOFF_CAP_MS = 10_000;

type WsLike = {
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
};

export class WsClient {
  connected = false;
  private ws: WsLike | null = null;
  private attempts = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private events: WsEvents,
    private factory: (url: string) => WsLike = (u) => new WebSocket(u) as unknown as WsLike,
  ) {}

  start(): void {
    this.closed = false;
    this.connect();
  }

  stop(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.ws?.close();
  }

  send(msg: ControlMessage): boolean {
    if (!this.connected || !this.ws) return false;
    this.ws.send(JSON.stringify(msg));
    return true;
  }

  private connect(): void {
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.connected = true;
      this.attempts = 0;
      this.events.onStatus?.(true);
    };
    ws.onmessage = (ev) => this.handle(String(ev.data));
    ws.onerror = () => ws.close();
    ws.onclose = () => {
      const was = this.connected;
      this.connected = false;
      if (was) this.events.onStatus?.(false);
      if (!this.closed) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    const delay = Math.min(BACKOFF_CAP_MS, BACKOFF_BASE_MS * 2 ** this.attempts);
    this.attempts += 1;
    this.timer = setTimeout(() => this.connect(), delay);
  }

  private handle(text: string): void {
    let doc: unknown;
    try {
      doc = JSON.parse(text);
    } catch {
      this.events.onBadSnapshot?.(new SchemaViolation("frame is not JSON"));
      return;
    }
    const typed = doc as { type?: string };
    if (typed.type === "history") {
      this.events.onHistory?.(doc as HistoryReply);
      return;
    }
    if (typed.type === "error") {
      this.events.onServerError?.(doc as ErrorReply);
      return;
    }
    try {
      this.events.onSnapshot(validateSnapshot(doc));
    } catch (err) {
      if (err instanceof SchemaViolation) this.events.onBadSnapshot?.(err);
      else throw err;
    }
  }
}
