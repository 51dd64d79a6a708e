import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { WsClient } from "../src/net";
import type { Snapshot } from "../src/types";

class FakeSocket {
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  sent: string[] = [];
  send(data: string): void { this.sent.push(data); }
  close(): void { this.onclose?.(); }
}

function harness() {
  const sockets: FakeSocket[] = [];
  const got: Snapshot[] = [];
  const errors: string[] = [];
  const status: boolean[] = [];
  const client = new WsClient("ws://test/ws", {
    onSnapshot: (s) => got.push(s),
    onBadSnapshot: (e) => errors.push(e.message),
    onStatus: (c) => status.push(c),
  }, () => {
    const s = new FakeSocket();
    sockets.push(s);
    return s;
  });
  return { client, sockets, got, errors, status };
}

describe("ws client", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("delivers schema-valid snapshots and surfaces invalid ones", () => {
    const { client, sockets, got, errors } = harness();
    client.start();
    sockets[0].onopen!();
    sockets[0].onmessage!({ data: JSON.stringify({ t: 5, visitors: [], primitives: [] }) });
    expect(got.length).toBe(1);
    sockets[0].onmessage!({ data: JSON.stringify({ t: -5, visitors: [], primitives: [] }) });
    sockets[0].onmessage!({ data: "not json{" });
    expect(got.length).toBe(1);
    expect(errors.length).toBe(2);
  });

  it("reconnects with growing backoff and resets after success", () => {
    const { client, sockets, status } = harness();
    client.start();
    expect(sockets.length).toBe(1);
    sockets[0].onclose!();               // never opened: quiet retry
    vi.advanceTimersByTime(499);
    expect(sockets.length).toBe(1);
    vi.advanceTimersByTime(1);           // 500 ms backoff
    expect(sockets.length).toBe(2);
    sockets[1].onclose!();
    vi.advanceTimersByTime(1000);        // doubled
    expect(sockets.length).toBe(3);
    sockets[2].onopen!();
    expect(status).toEqual([true]);
    sockets[2].onclose!();               // drop after success: status + fresh backoff
    expect(status).toEqual([true, false]);
    vi.advanceTimersByTime(500);
    expect(sockets.length).toBe(4);
  });

  it("send only works while connected", () => {
    const { client, sockets } = harness();
    client.start();
    expect(client.send({ type: "set_viz", patch: { area: false } })).toBe(false);
    sockets[0].onopen!();
    expect(client.send({ type: "set_viz", patch: { area: false } })).toBe(true);
    expect(sockets[0].sent).toEqual(['{"type":"set_viz","patch":{"area":false}}']);
  });

  it("stop() prevents further reconnects", () => {
    const { client, sockets } = harness();
    client.start();
    sockets[0].onopen!();
    client.stop();
    vi.advanceTimersByTime(60_000);
    expect(sockets.length).toBe(1);
  });

  it("routes history and error frames past snapshot validation", () => {
    const { client, sockets } = harness();
    const history: string[] = [];
    const serverErrors: string[] = [];
    const c2 = new WsClient("ws://test/ws", {
      onSnapshot: () => {},
      onHistory: (h) => history.push(h.visitor),
      onServerError: (e) => serverErrors.push(e.message),
    }, () => sockets[sockets.length - 1] ?? new FakeSocket());
    void client;
    const sock = new FakeSocket();
    sockets.push(sock);
    c2.start();
    sock.onopen!();
    sock.onmessage!({ data: '{"type":"history","visitor":"v01","samples":[]}' });
    sock.onmessage!({ data: '{"type":"error","message":"nope"}' });
    expect(history).toEqual(["v01"]);
    expect(serverErrors).toEqual(["nope"]);
  });
});
