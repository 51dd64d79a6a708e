/** Control-panel model: pure state + outbound control messages, no DOM.

The UI layer binds widgets to this; tests drive it directly. The local
config mirror is optimistic and reconciled from the config echoed in each
snapshot, so it converges to whatever the server actually applied.
*/

import { makeThrottle } from "./throttle";
import type { ControlMessage, Snapshot, WirePose } from "./types";

export const TOGGLE_FLAGS = [
  "frustum", "arrow", "area", "panel", "bbox", "trajectory",
  "offline_markers", "calib_circles", "rendered_view", "link_curve",
  "fps_line", "hand_skeleton", "net_traffic", "flatten_links",
] as const;
export type ToggleFlag = (typeof TOGGLE_FLAGS)[number];

export const HOST_POSE_MIN_INTERVAL_MS = 100; // 10 Hz ceiling

export interface PanelDeps {
  send(msg: ControlMessage): boolean;
  now?: () => number;
  schedule?: (fn: () => void, ms: number) => unknown;
}

export class ControlPanel {
  /** Local mirror of the server's active config; echo wins. */
  config: Record<string, unknown> = {};
  selectedVisitor: string | null = null;
  connected = false;
  lastError: string | null = null;

  private sendHostPose: (pose: WirePose) => void;

  constructor(private deps: PanelDeps) {
    this.sendHostPose = makeThrottle<WirePose>(
      HOST_POSE_MIN_INTERVAL_MS,
      (pose) => { this.deps.send({ type: "set_host_pose", pose }); },
      deps.now,
      deps.schedule,
    );
  }

  setConnected(connected: boolean): void {
    this.connected = connected;
  }

  /** Echoed config from a snapshot; the server is the source of truth. */
  absorbSnapshot(snap: Snapshot): void {
    if (snap.config) this.config = { ...snap.config };
    if (this.selectedVisitor &&
        !snap.visitors.some((v) => v.id === this.selectedVisitor)) {
      this.selectedVisitor = null;
    }
  }

  toggle(flag: ToggleFlag): boolean {
    const next = !(this.config[flag] ?? false);
    return this.patch({ [flag]: next });
  }

  setPlacement(placement: "subject" | "host"): boolean {
    return this.patch({ placement });
  }

  setLevel(level: "eye" | "floor"): boolean {
    return this.patch({ level });
  }

  setGridMode(grid_mode: "auto" | "grid" | "sphere"): boolean {
    return this.patch({ grid_mode });
  }

  setCurveWidthMax(value: number): boolean {
    return this.patch({ curve_w_max: value });
  }

  /** Trajectory window in milliseconds. */
  setWindow(value: number): boolean {
    return this.patch({ window: Math.round(value) });
  }

  patch(patch: Record<string, unknown>): boolean {
    if (!this.connected) return false;
    const sent = this.deps.send({ type: "set_viz", patch });
    if (sent) this.config = { ...this.config, ...patch };
    return sent;
  }

  selectVisitor(id: string | null): void {
    this.selectedVisitor = id;
  }

  requestHistory(upToT?: number): boolean {
    if (!this.connected || !this.selectedVisitor) return false;
    const msg: ControlMessage = upToT === undefined
      ? { type: "request_history", visitor_id: this.selectedVisitor }
      : { type: "request_history", visitor_id: this.selectedVisitor, up_to_t: upToT };
    return this.deps.send(msg);
  }

  /** Camera pose feed; rate-limited so a dragged camera can't flood. */
  cameraMoved(pose: WirePose): void {
    if (!this.connected) return;
    this.sendHostPose(pose);
  }

  noteServerError(message: string): void {
    this.lastError = message;
  }
}
