import { describe, expect, it } from "vitest";
import { ControlPanel, HOST_POSE_MIN_INTERVAL_MS } from "../src/controls";
import type { ControlMessage, Snapshot } from "../src/types";

/** Deterministic clock + timer queue standing in for the browser loop. */
class FakeClock {
  t = 0;
  private timers: { at: number; fn: () => void }[] = [];
  now = () => this.t;
  schedule = (fn: () => void, ms: number) => {
    this.timers.push({ at: this.t + ms, fn });
    return 0;
  };
  advance(to: number): void {
    while (true) {
      this.timers.sort((a, b) => a.at - b.at);
      const next = this.timers[0];
      if (!next || next.at > to) break;
      this.timers.shift();
      this.t = next.at;
      next.fn();
    }
    this.t = to;
  }
}

function makePanel() {
  const sent: ControlMessage[] = [];
  const clock = new FakeClock();
  const panel = new ControlPanel({
    send: (msg) => { sent.push(msg); return true; },
    now: clock.now,
    schedule: clock.schedule,
  });
  panel.setConnected(true);
  return { panel, sent, clock };
}

function snapshotWithConfig(t: number, config: Record<string, unknown>): Snapshot {
  return { t, visitors: [{ id: "v01", role: "visitor", online: true, tracking_ok: true }],
           primitives: [], config };
}

describe("control panel", () => {
  it("a toggle sends one patch and the echo converges within 2 ticks", () => {
    const { panel, sent } = makePanel();
    panel.absorbSnapshot(snapshotWithConfig(1000, { area: true, placement: "subject" }));
    expect(panel.config.area).toBe(true);

    panel.toggle("area");
    expect(sent).toEqual([{ type: "set_viz", patch: { area: false } }]);
    // optimistic until the server echoes it back
    expect(panel.config.area).toBe(false);

    // tick 1 still shows the old config (patch landed mid-tick), tick 2 echoes it
    panel.absorbSnapshot(snapshotWithConfig(1100, { area: true, placement: "subject" }));
    panel.absorbSnapshot(snapshotWithConfig(1200, { area: false, placement: "subject" }));
    expect(panel.config.area).toBe(false);
    expect(sent.length).toBe(1);
  });

  it("rejected patches converge back to the server's config", () => {
    const { panel } = makePanel();
    panel.absorbSnapshot(snapshotWithConfig(1000, { curve_w_max: 0.15 }));
    panel.setCurveWidthMax(99);
    expect(panel.config.curve_w_max).toBe(99);
    panel.noteServerError("curve_w_max: out of range");
    panel.absorbSnapshot(snapshotWithConfig(1100, { curve_w_max: 0.15 }));
    expect(panel.config.curve_w_max).toBe(0.15);
    expect(panel.lastError).toContain("curve_w_max");
  });

  it("placement, level, grid and sliders emit typed patches", () => {
    const { panel, sent } = makePanel();
    panel.setPlacement("host");
    panel.setLevel("floor");
    panel.setGridMode("sphere");
    panel.setCurveWidthMax(0.2);
    panel.setWindow(30_000);
    expect(sent).toEqual([
      { type: "set_viz", patch: { placement: "host" } },
      { type: "set_viz", patch: { level: "floor" } },
      { type: "set_viz", patch: { grid_mode: "sphere" } },
      { type: "set_viz", patch: { curve_w_max: 0.2 } },
      { type: "set_viz", patch: { window: 30_000 } },
    ]);
  });

  it("history requests name the selected visitor", () => {
    const { panel, sent } = makePanel();
    expect(panel.requestHistory()).toBe(false);
    panel.selectVisitor("v07");
    expect(panel.requestHistory()).toBe(true);
    expect(panel.requestHistory(20_000)).toBe(true);
    expect(sent).toEqual([
      { type: "request_history", visitor_id: "v07" },
      { type: "request_history", visitor_id: "v07", up_to_t: 20_000 },
    ]);
  });

  it("selection clears when the visitor leaves the roster", () => {
    const { panel } = makePanel();
    panel.selectVisitor("ghost");
    panel.absorbSnapshot(snapshotWithConfig(1000, {}));
    expect(panel.selectedVisitor).toBeNull();
  });

  it("continuous camera motion is throttled to at most 10 poses per second", () => {
    const { panel, sent, clock } = makePanel();
    // one camera event per millisecond for 5 s
    for (let ms = 0; ms < 5000; ms++) {
      clock.advance(ms);
      panel.cameraMoved({ p: [ms, 1.6, 0], q: [0, 0, 0, 1] });
    }
    clock.advance(5200); // allow the trailing send to flush
    const poses = sent.filter((m) => m.type === "set_host_pose");
    expect(poses.length).toBeLessThanOrEqual(51);
    expect(poses.length).toBeGreaterThanOrEqual(45);
    // consecutive sends honor the minimum spacing; the latest pose wins
    const last = poses[poses.length - 1];
    expect(last.type === "set_host_pose" && last.pose.p[0]).toBe(4999);
    expect(HOST_POSE_MIN_INTERVAL_MS).toBe(100);
  });

  it("does nothing while disconnected", () => {
    const { panel, sent } = makePanel();
    panel.setConnected(false);
    expect(panel.toggle("frustum")).toBe(false);
    panel.cameraMoved({ p: [0, 0, 0], q: [0, 0, 0, 1] });
    expect(panel.requestHistory()).toBe(false);
    expect(sent).toEqual([]);
  });
});
