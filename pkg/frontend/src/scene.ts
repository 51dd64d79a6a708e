/** Builders turning snapshot primitives into three.js objects.

Every snapshot kind has a renderer; an unknown kind is logged and skipped so
newer servers keep working against older dashboards. Builders run headless
(no WebGL context) which keeps them unit-testable; text rendering degrades
gracefully where no canvas exists.
*/

import * as THREE from "three";
import type {
  ArrowPrim, BoxPrim, CirclesPrim, ColorRgba, EventMarkerPrim, FrustumPrim,
  HeadPrim, PanelPrim, Primitive, RibbonPrim, SkeletonPrim, Snapshot,
  SquarePrim, Vec3, Visitor, WirePose,
} from "./types";

const PATTERN_LENGTH_M = 0.5; // one arrow repeat along an animated ribbon

function v3(v: Vec3): THREE.Vector3 {
  return new THREE.Vector3(v[0], v[1], v[2]);
}

function applyPose(obj: THREE.Object3D, pose: WirePose): void {
  obj.position.set(pose.p[0], pose.p[1], pose.p[2]);
  obj.quaternion.set(pose.q[0], pose.q[1], pose.q[2], pose.q[3]);
}

function lineMaterial(c: ColorRgba): THREE.LineBasicMaterial {
  return new THREE.LineBasicMaterial({
    color: new THREE.Color(c[0], c[1], c[2]),
    transparent: c[3] < 1,
    opacity: c[3],
  });
}

// ---------------------------------------------------------------------------
// Rendered-view textures

/** Expand the 4-byte stub view seed into a deterministic 8x8 color grid. */
export function stubPixels(seed: Uint8Array, w: number, h: number): Uint8Array<ArrayBuffer> {
  let s = ((seed[0] << 24) | (seed[1] << 16) | (seed[2] << 8) | seed[3]) >>> 0;
  const next = () => {
    s ^= s << 13; s >>>= 0;
    s ^= s >> 17;
    s ^= s << 5; s >>>= 0;
    return s;
  };
  const cells = new Uint8Array(8 * 8 * 3);
  for (let i = 0; i < cells.length; i++) cells[i] = next() & 0xff;
  const out = new Uint8Array(w * h * 4);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const c = ((Math.floor((y * 8) / h) * 8) + Math.floor((x * 8) / w)) * 3;
      const o = (y * w + x) * 4;
      out[o] = cells[c];
      out[o + 1] = cells[c + 1];
      out[o + 2] = cells[c + 2];
      out[o + 3] = 255;
    }
  }
  return out;
}

function b64Bytes(data: string): Uint8Array<ArrayBuffer> {
  if (typeof atob === "function") {
    const raw = atob(data);
    const out = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) out[i] = raw.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(data, "base64"));
}

/** Resolves "visitorId:viewT" refs to textures built from visitor views. */
export class ViewTextures {
  private cache = new Map<string, THREE.DataTexture>();

  constructor(private visitors: Visitor[]) {}

  get(ref: string): THREE.DataTexture | null {
    const hit = this.cache.get(ref);
    if (hit) return hit;
    const id = ref.slice(0, ref.lastIndexOf(":"));
    const t = Number(ref.slice(ref.lastIndexOf(":") + 1));
    const view = this.visitors.find((v) => v.id === id)?.view;
    if (!view || view.t !== t) return null;
    const bytes = b64Bytes(view.data);
    let rgba: Uint8Array<ArrayBuffer>;
    if (view.fmt === "rgb8" && bytes.length === view.w * view.h * 3) {
      rgba = new Uint8Array(view.w * view.h * 4);
      for (let i = 0, o = 0; i < bytes.length; i += 3, o += 4) {
        rgba[o] = bytes[i]; rgba[o + 1] = bytes[i + 1];
        rgba[o + 2] = bytes[i + 2]; rgba[o + 3] = 255;
      }
    } else if (view.fmt === "stub" && bytes.length === 4) {
      rgba = stubPixels(bytes, view.w, view.h);
    } else {
      return null;
    }
    const tex = new THREE.DataTexture(rgba, view.w, view.h, THREE.RGBAFormat);
    tex.needsUpdate = true;
    this.cache.set(ref, tex);
    return tex;
  }
}

// ---------------------------------------------------------------------------
// Per-kind builders

function buildRibbon(p: RibbonPrim): THREE.Object3D {
  const n = p.points.length;
  const positions = new Float32Array(n * 2 * 3);
  const colors = new Float32Array(n * 2 * 4);
  const uvs = new Float32Array(n * 2 * 2);
  const up = new THREE.Vector3(0, 1, 0);
  const dir = new THREE.Vector3();
  const side = new THREE.Vector3(1, 0, 0);
  let along = 0;
  for (let i = 0; i < n; i++) {
    const cur = v3(p.points[i]);
    const nxt = v3(p.points[Math.min(i + 1, n - 1)]);
    const prv = v3(p.points[Math.max(i - 1, 0)]);
    dir.subVectors(nxt, prv);
    if (dir.lengthSq() > 1e-12) {
      side.crossVectors(dir, up).normalize();
      if (side.lengthSq() < 1e-12) side.set(1, 0, 0); // vertical run
    }
    if (i > 0) along += cur.distanceTo(prv);
    const half = (p.widths[Math.min(i, p.widths.length - 1)] ?? 0) / 2;
    const c = p.colors[Math.min(i, p.colors.length - 1)];
    for (const s of [-1, 1]) {
      const k = i * 2 + (s + 1) / 2;
      positions[k * 3] = cur.x + side.x * half * s;
      positions[k * 3 + 1] = cur.y + side.y * half * s;
      positions[k * 3 + 2] = cur.z + side.z * half * s;
      colors.set(c, k * 4);
      uvs[k * 2] = along / PATTERN_LENGTH_M;
      uvs[k * 2 + 1] = (s + 1) / 2;
    }
  }
  const index: number[] = [];
  for (let i = 0; i < n - 1; i++) {
    const a = i * 2;
    index.push(a, a + 1, a + 2, a + 1, a + 3, a + 2);
  }
  const geom = new THREE.BufferGeometry();
  geom.setAttribute("position", new THREE.BufferAttribute(positions, 3));
  geom.setAttribute("color", new THREE.BufferAttribute(colors, 4));
  geom.setAttribute("uv", new THREE.BufferAttribute(uvs, 2));
  geom.setIndex(index);
  const mat = new THREE.MeshBasicMaterial({
    vertexColors: true,
    transparent: true,
    side: THREE.DoubleSide,
    depthWrite: false,
  });
  if (p.pattern === "arrowed") mat.map = arrowTexture();
  const mesh = new THREE.Mesh(geom, mat);
  if (p.pattern === "arrowed" && p.anim_speed > 0) {
    mesh.userData.animSpeed = p.anim_speed;
  }
  return mesh;
}

let arrowTex: THREE.DataTexture | null = null;

/** Chevron alpha strip; offset.x scrolls it along the ribbon. */
function arrowTexture(): THREE.DataTexture {
  if (arrowTex) return arrowTex;
  const w = 32, h = 8;
  const px = new Uint8Array(w * h * 4).fill(255);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const tip = Math.abs(y - h / 2) + 8;
      const a = x >= tip && x < tip + 10 ? 255 : 60;
      px[(y * w + x) * 4 + 3] = a;
    }
  }
  arrowTex = new THREE.DataTexture(px, w, h, THREE.RGBAFormat);
  arrowTex.wrapS = THREE.RepeatWrapping;
  arrowTex.needsUpdate = true;
  return arrowTex;
}

function makeTextTexture(lines: string[], size: [number, number]): THREE.Texture | null {
  if (typeof document === "undefined") return null;
  const scale = 256;
  const canvas = document.createElement("canvas");
  canvas.width = Math.max(1, Math.round(size[0] * scale));
  canvas.height = Math.max(1, Math.round(size[1] * scale));
  const ctx = canvas.getContext("2d");
  if (!ctx) return null;
  ctx.fillStyle = "rgba(12, 16, 24, 0.85)";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#e8edf4";
  const lineH = lines.length ? Math.min(28, canvas.height / (lines.length + 0.5)) : 24;
  ctx.font = `${Math.round(lineH * 0.8)}px monospace`;
  lines.forEach((line, i) => ctx.fillText(line, 8, lineH * (i + 1)));
  const tex = new THREE.CanvasTexture(canvas);
  return tex;
}

function buildPanel(p: PanelPrim, views: ViewTextures): THREE.Object3D {
  const geom = new THREE.PlaneGeometry(p.size[0], p.size[1]);
  const mat = new THREE.MeshBasicMaterial({ side: THREE.DoubleSide, transparent: true });
  const tex = p.texture_ref ? views.get(p.texture_ref) : makeTextTexture(p.lines, p.size);
  if (tex) mat.map = tex;
  else mat.color.set(0x1a2230);
  const mesh = new THREE.Mesh(geom, mat);
  mesh.position.copy(v3(p.center));
  const normal = v3(p.normal).normalize();
  const up = v3(p.up).normalize();
  const m = new THREE.Matrix4().lookAt(new THREE.Vector3(), normal.clone().negate(), up);
  mesh.quaternion.setFromRotationMatrix(m);
  mesh.userData.lines = p.lines;
  mesh.userData.owner = p.owner;
  return mesh;
}

function buildFrustum(p: FrustumPrim, views: ViewTextures): THREE.Object3D {
  const hw = Math.tan((p.fov_h * Math.PI) / 360) * p.depth;
  const hh = Math.tan((p.fov_v * Math.PI) / 360) * p.depth;
  // apex at origin looking down -Z, far face corners at -depth
  const c = [
    new THREE.Vector3(-hw, -hh, -p.depth), new THREE.Vector3(hw, -hh, -p.depth),
    new THREE.Vector3(hw, hh, -p.depth), new THREE.Vector3(-hw, hh, -p.depth),
  ];
  const apex = new THREE.Vector3();
  const pts: THREE.Vector3[] = [];
  for (const corner of c) pts.push(apex.clone(), corner);
  for (let i = 0; i < 4; i++) pts.push(c[i], c[(i + 1) % 4]);
  const geom = new THREE.BufferGeometry().setFromPoints(pts);
  const group = new THREE.Group();
  group.add(new THREE.LineSegments(geom, lineMaterial(p.color)));
  if (p.face_texture_ref) {
    const tex = views.get(p.face_texture_ref);
    if (tex) {
      const face = new THREE.Mesh(
        new THREE.PlaneGeometry(hw * 2, hh * 2),
        new THREE.MeshBasicMaterial({ map: tex, side: THREE.DoubleSide }),
      );
      face.position.set(0, 0, -p.depth);
      group.add(face);
    }
  }
  applyPose(group, p.apex);
  return group;
}

function buildBox(p: BoxPrim): THREE.Object3D {
  const geom = new THREE.BoxGeometry(
    p.half_extents[0] * 2, p.half_extents[1] * 2, p.half_extents[2] * 2);
  const edges = new THREE.EdgesGeometry(geom);
  const lines = new THREE.LineSegments(edges, lineMaterial(p.color));
  lines.position.copy(v3(p.center));
  return lines;
}

function buildArrow(p: ArrowPrim): THREE.Object3D {
  const group = new THREE.Group();
  const mat = new THREE.MeshBasicMaterial({
    color: new THREE.Color(p.color[0], p.color[1], p.color[2]),
    transparent: p.color[3] < 1,
    opacity: p.color[3],
  });
  const headLen = p.height * 0.4;
  const cone = new THREE.Mesh(new THREE.ConeGeometry(p.height * 0.18, headLen, 12), mat);
  cone.rotation.x = Math.PI; // point down at the visitor
  cone.position.y = headLen / 2;
  const shaft = new THREE.Mesh(
    new THREE.CylinderGeometry(p.height * 0.05, p.height * 0.05, p.height - headLen, 8), mat);
  shaft.position.y = headLen + (p.height - headLen) / 2;
  group.add(cone, shaft);
  group.position.copy(v3(p.position));
  return group;
}

function circlePoints(radius: number, segments = 48): THREE.Vector3[] {
  const pts: THREE.Vector3[] = [];
  for (let i = 0; i <= segments; i++) {
    const a = (i / segments) * Math.PI * 2;
    pts.push(new THREE.Vector3(Math.cos(a) * radius, 0, Math.sin(a) * radius));
  }
  return pts;
}

function buildCircles(p: CirclesPrim): THREE.Object3D {
  const group = new THREE.Group();
  p.radii.forEach((r, i) => {
    const geom = new THREE.BufferGeometry().setFromPoints(circlePoints(r));
    group.add(new THREE.Line(geom, lineMaterial(p.colors[Math.min(i, p.colors.length - 1)])));
  });
  group.position.copy(v3(p.center));
  return group;
}

function buildSquare(p: SquarePrim): THREE.Object3D {
  const h = p.side / 2;
  const pts = [
    new THREE.Vector3(-h, 0, -h), new THREE.Vector3(h, 0, -h),
    new THREE.Vector3(h, 0, h), new THREE.Vector3(-h, 0, h),
    new THREE.Vector3(-h, 0, -h),
  ];
  const line = new THREE.Line(new THREE.BufferGeometry().setFromPoints(pts), lineMaterial(p.color));
  line.position.set(p.center_xz[0], p.y, p.center_xz[1]);
  return line;
}

function buildSkeleton(p: SkeletonPrim): THREE.Object3D {
  const group = new THREE.Group();
  for (const joint of p.joints) {
    const axes = new THREE.AxesHelper(p.axis_len);
    applyPose(axes, joint);
    group.add(axes);
  }
  group.userData.owner = p.owner;
  return group;
}

function buildHead(p: HeadPrim): THREE.Object3D {
  const mesh = new THREE.Mesh(
    new THREE.SphereGeometry(0.1, 16, 12),
    new THREE.MeshBasicMaterial({ color: 0x8899aa, wireframe: true }),
  );
  applyPose(mesh, p.pose);
  mesh.userData.owner = p.owner;
  return mesh;
}

function buildEventMarker(p: EventMarkerPrim): THREE.Object3D {
  // fade the flag out over a minute so old incidents recede
  const alpha = Math.max(0.25, 1 - p.age_s / 60);
  const mat = new THREE.MeshBasicMaterial({
    color: 0xff4444, transparent: true, opacity: alpha,
  });
  const mesh = new THREE.Mesh(new THREE.OctahedronGeometry(0.12), mat);
  mesh.position.copy(v3(p.position));
  mesh.position.y += 0.3;
  mesh.userData.event = p.event;
  return mesh;
}

// ---------------------------------------------------------------------------
// Snapshot assembly

export function buildPrimitive(p: Primitive, views: ViewTextures): THREE.Object3D | null {
  switch (p.kind) {
    case "ribbon": return buildRibbon(p);
    case "panel": return buildPanel(p, views);
    case "frustum": return buildFrustum(p, views);
    case "box": return buildBox(p);
    case "arrow": return buildArrow(p);
    case "circles": return buildCircles(p);
    case "square": return buildSquare(p);
    case "skeleton": return buildSkeleton(p);
    case "head": return buildHead(p);
    case "event_marker": return buildEventMarker(p);
    default:
      console.warn("unknown primitive kind, skipped:", (p as { kind?: string }).kind);
      return null;
  }
}

/** Whole drawable scene for one snapshot. */
export function buildScene(snap: Snapshot): THREE.Group {
  const views = new ViewTextures(snap.visitors);
  const group = new THREE.Group();
  for (const prim of snap.primitives) {
    const obj = buildPrimitive(prim, views);
    if (obj) {
      obj.userData.kind = prim.kind;
      group.add(obj);
    }
  }
  return group;
}

/** Scroll arrowed-ribbon patterns; call once per frame with seconds. */
export function advanceAnimations(root: THREE.Object3D, dt: number): void {
  root.traverse((obj) => {
    const speed = obj.userData.animSpeed as number | undefined;
    if (speed && obj instanceof THREE.Mesh) {
      const mat = obj.material as THREE.MeshBasicMaterial;
      if (mat.map) {
        mat.map.offset.x = (mat.map.offset.x - speed * dt) % 1;
      }
    }
  });
}

/** Frees geometry and materials of a scene built by buildScene. */
export function disposeScene(root: THREE.Object3D): void {
  root.traverse((obj) => {
    if (obj instanceof THREE.Mesh || obj instanceof THREE.Line ||
        obj instanceof THREE.LineSegments) {
      obj.geometry.dispose();
      const mats = Array.isArray(obj.material) ? obj.material : [obj.material];
      for (const m of mats) {
        const map = (m as THREE.MeshBasicMaterial).map;
        if (map && map !== arrowTex) map.dispose();
        m.dispose();
      }
    }
  });
}
