/** Wire types for the snapshot stream and control channel. */

export type Vec3 = [number, number, number];
export type QuatXYZW = [number, number, number, number];
export type ColorRgba = [number, number, number, number];

export interface WirePose {
  p: Vec3;
  q: QuatXYZW;
}

export interface DeviceMetrics {
  fps: number;
  battery: number;
  cpu: number;
  gpu: number;
  net_in_bps: number;
  net_out_bps: number;
  latency_ms: number;
}

export interface VisitorView {
  t: number;
  w: number;
  h: number;
  fmt: string;
  data: string;
}

export interface Visitor {
  id: string;
  role: "visitor" | "host";
  online: boolean;
  tracking_ok: boolean;
  t?: number;
  position?: Vec3;
  metrics?: DeviceMetrics;
  view?: VisitorView;
}

export interface RibbonPrim {
  kind: "ribbon";
  points: Vec3[];
  widths: number[];
  colors: ColorRgba[];
  pattern: "plain" | "arrowed";
  anim_speed: number;
}

export interface PanelPrim {
  kind: "panel";
  owner: string;
  center: Vec3;
  normal: Vec3;
  up: Vec3;
  size: [number, number];
  lines: string[];
  texture_ref?: string;
}

export interface FrustumPrim {
  kind: "frustum";
  apex: WirePose;
  fov_h: number;
  fov_v: number;
  depth: number;
  color: ColorRgba;
  face_texture_ref?: string;
}

export interface BoxPrim {
  kind: "box";
  center: Vec3;
  half_extents: Vec3;
  color: ColorRgba;
}

export interface ArrowPrim {
  kind: "arrow";
  position: Vec3;
  height: number;
  color: ColorRgba;
}

export interface CirclesPrim {
  kind: "circles";
  center: Vec3;
  radii: number[];
  colors: ColorRgba[];
}

export interface SquarePrim {
  kind: "square";
  center_xz: [number, number];
  y: number;
  side: number;
  color: ColorRgba;
}

export interface SkeletonPrim {
  kind: "skeleton";
  owner: string;
  joints: WirePose[];
  axis_len: number;
}

export interface HeadPrim {
  kind: "head";
  owner: string;
  pose: WirePose;
}

export interface EventMarkerPrim {
  kind: "event_marker";
  position: Vec3;
  event: string;
  age_s: number;
}

export type Primitive =
  | RibbonPrim
  | PanelPrim
  | FrustumPrim
  | BoxPrim
  | ArrowPrim
  | CirclesPrim
  | SquarePrim
  | SkeletonPrim
  | HeadPrim
  | EventMarkerPrim;

export const PRIMITIVE_KINDS = [
  "ribbon", "panel", "frustum", "box", "arrow",
  "circles", "square", "skeleton", "head", "event_marker",
] as const;

export interface Diagnostics {
  stale_samples: number;
  decode_errors: number;
  connected: number;
  dropped_ticks: number;
}

export interface Snapshot {
  t: number;
  visitors: Visitor[];
  primitives: Primitive[];
  config?: Record<string, unknown>;
  diagnostics?: Diagnostics;
}

export interface HistoryReply {
  type: "history";
  visitor: string;
  samples: { t: number; p: Vec3; q: QuatXYZW; fps: number | null }[];
}

export interface ErrorReply {
  type: "error";
  message: string;
}

export type SetViz = { type: "set_viz"; patch: Record<string, unknown> };
export type RequestHistory = { type: "request_history"; visitor_id: string; up_to_t?: number };
export type SetHostPose = { type: "set_host_pose"; pose: WirePose };
export type ControlMessage = SetViz | RequestHistory | SetHostPose;
