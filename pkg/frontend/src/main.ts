/** Browser entry: wires the socket, the 3D view, and the control panel. */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";
import { WsClient } from "./net";
import { ControlPanel, TOGGLE_FLAGS } from "./controls";
import { advanceAnimations, buildPrimitive, buildScene, disposeScene, ViewTextures } from "./scene";
import type { HistoryReply, Snapshot, Vec3, ColorRgba } from "./types";
import "./style.css";

const app = document.getElementById("app")!;
const canvasHost = document.createElement("div");
canvasHost.id = "view";
const panelHost = document.createElement("div");
panelHost.id = "panel";
app.append(canvasHost, panelHost);

// --------------------------------------------------------------------------
// Renderer

const renderer = new THREE.WebGLRenderer({ antialias: true });
renderer.setSize(canvasHost.clientWidth || window.innerWidth - 280, window.innerHeight);
canvasHost.appendChild(renderer.domElement);
const scene = new THREE.Scene();
scene.background = new THREE.Color(0x0b0e14);
scene.add(new THREE.GridHelper(20, 20, 0x334455, 0x1c2433));
const camera = new THREE.PerspectiveCamera(60, 1, 0.05, 200);
camera.position.set(4, 3, 6);
const orbit = new OrbitControls(camera, renderer.domElement);
orbit.target.set(0, 1, 0);

function resize(): void {
  const w = window.innerWidth - panelHost.offsetWidth;
  renderer.setSize(w, window.innerHeight);
  camera.aspect = w / window.innerHeight;
  camera.updateProjectionMatrix();
}
window.addEventListener("resize", resize);

let liveGroup: THREE.Group | null = null;
let historyGroup: THREE.Group | null = null;
let lastSnapshot: Snapshot | null = null;

function showSnapshot(snap: Snapshot): void {
  if (liveGroup) {
    scene.remove(liveGroup);
    disposeScene(liveGroup);
  }
  liveGroup = buildScene(snap);
  scene.add(liveGroup);
}

// --------------------------------------------------------------------------
// History overlay: one static trajectory, dismiss by clicking the button again

function showHistory(reply: HistoryReply): void {
  clearHistory();
  if (reply.samples.length < 2) return;
  const points: Vec3[] = reply.samples.map((s) => s.p);
  const colors: ColorRgba[] = reply.samples.map(() => [1, 1, 0.2, 0.9]);
  const widths = reply.samples.map(() => 0.03);
  const prim = { kind: "ribbon", points, widths, colors, pattern: "plain", anim_speed: 0 } as const;
  const obj = buildPrimitive(prim, new ViewTextures([]));
  if (!obj) return;
  historyGroup = new THREE.Group();
  historyGroup.add(obj);
  scene.add(historyGroup);
  historyBtn.textContent = `dismiss history (${reply.visitor})`;
}

function clearHistory(): void {
  if (historyGroup) {
    scene.remove(historyGroup);
    disposeScene(historyGroup);
    historyGroup = null;
    historyBtn.textContent = "request history";
  }
}

// --------------------------------------------------------------------------
// Socket + panel model

const panel = new ControlPanel({
  send: (msg) => client.send(msg),
});

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const client = new WsClient(wsUrl, {
  onSnapshot(snap) {
    lastSnapshot = snap;
    panel.absorbSnapshot(snap);
    showSnapshot(snap);
    refreshPanel(snap);
  },
  onHistory: showHistory,
  onServerError(reply) {
    panel.noteServerError(reply.message);
    errorBox.textContent = reply.message;
  },
  onStatus(connected) {
    panel.setConnected(connected);
    statusDot.className = connected ? "on" : "off";
    statusText.textContent = connected ? "connected" : "reconnecting...";
    panelHost.classList.toggle("disabled", !connected);
  },
  onBadSnapshot(err) {
    errorBox.textContent = err.message;
  },
});

// --------------------------------------------------------------------------
// DOM panel

const statusDot = document.createElement("span");
statusDot.className = "off";
const statusText = document.createElement("span");
statusText.textContent = "connecting...";
const header = document.createElement("div");
header.className = "status";
header.append(statusDot, statusText);
panelHost.appendChild(header);

const errorBox = document.createElement("div");
errorBox.className = "error";

const toggleInputs = new Map<string, HTMLInputElement>();
const togglesBox = document.createElement("div");
togglesBox.className = "group";
for (const flag of TOGGLE_FLAGS) {
  const label = document.createElement("label");
  const input = document.createElement("input");
  input.type = "checkbox";
  input.addEventListener("change", () => panel.patch({ [flag]: input.checked }));
  label.append(input, document.createTextNode(flag.replaceAll("_", " ")));
  togglesBox.appendChild(label);
  toggleInputs.set(flag, input);
}
panelHost.appendChild(togglesBox);

function makeSelect(name: string, options: string[], apply: (v: string) => void): HTMLSelectElement {
  const wrap = document.createElement("label");
  wrap.className = "row";
  wrap.textContent = name;
  const sel = document.createElement("select");
  for (const o of options) {
    const opt = document.createElement("option");
    opt.value = o;
    opt.textContent = o;
    sel.appendChild(opt);
  }
  sel.addEventListener("change", () => apply(sel.value));
  wrap.appendChild(sel);
  panelHost.appendChild(wrap);
  return sel;
}

const placementSel = makeSelect("placement", ["subject", "host"],
  (v) => panel.setPlacement(v as "subject" | "host"));
const levelSel = makeSelect("level", ["eye", "floor"],
  (v) => panel.setLevel(v as "eye" | "floor"));
const gridSel = makeSelect("grid", ["auto", "grid", "sphere"],
  (v) => panel.setGridMode(v as "auto" | "grid" | "sphere"));

function makeSlider(name: string, min: number, max: number, step: number,
                    apply: (v: number) => void): HTMLInputElement {
  const wrap = document.createElement("label");
  wrap.className = "row";
  wrap.textContent = name;
  const input = document.createElement("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = String(step);
  input.addEventListener("change", () => apply(Number(input.value)));
  wrap.appendChild(input);
  panelHost.appendChild(wrap);
  return input;
}

const widthSlider = makeSlider("curve width", 0.02, 0.5, 0.01,
  (v) => panel.setCurveWidthMax(v));
const windowSlider = makeSlider("window (s)", 10, 300, 5,
  (v) => panel.setWindow(v * 1000));

const visitorSel = document.createElement("select");
visitorSel.addEventListener("change", () => panel.selectVisitor(visitorSel.value || null));
const visitorRow = document.createElement("label");
visitorRow.className = "row";
visitorRow.textContent = "visitor";
visitorRow.appendChild(visitorSel);
panelHost.appendChild(visitorRow);

const historyBtn = document.createElement("button");
historyBtn.textContent = "request history";
historyBtn.addEventListener("click", () => {
  if (historyGroup) clearHistory();
  else panel.requestHistory();
});
panelHost.appendChild(historyBtn);
panelHost.appendChild(errorBox);

const diagBox = document.createElement("pre");
diagBox.className = "diag";
panelHost.appendChild(diagBox);

function refreshPanel(snap: Snapshot): void {
  for (const [flag, input] of toggleInputs) {
    const v = panel.config[flag];
    if (typeof v === "boolean") input.checked = v;
  }
  if (typeof panel.config.placement === "string") placementSel.value = panel.config.placement;
  if (typeof panel.config.level === "string") levelSel.value = panel.config.level;
  if (typeof panel.config.grid_mode === "string") gridSel.value = panel.config.grid_mode;
  if (typeof panel.config.curve_w_max === "number") widthSlider.value = String(panel.config.curve_w_max);
  if (typeof panel.config.window === "number") windowSlider.value = String(panel.config.window / 1000);

  const ids = snap.visitors.map((v) => v.id);
  if (ids.join() !== Array.from(visitorSel.options).map((o) => o.value).join()) {
    const prev = visitorSel.value;
    visitorSel.replaceChildren(...ids.map((id) => {
      const opt = document.createElement("option");
      opt.value = id;
      opt.textContent = id;
      return opt;
    }));
    if (ids.includes(prev)) visitorSel.value = prev;
    panel.selectVisitor(visitorSel.value || null);
  }
  if (snap.diagnostics) {
    const d = snap.diagnostics;
    diagBox.textContent =
      `t ${(snap.t / 1000).toFixed(1)}s  devices ${d.connected}\n` +
      `decode errors ${d.decode_errors}  dropped ticks ${d.dropped_ticks}`;
  }
}

// --------------------------------------------------------------------------
// Camera doubles as host pose at desk scale

orbit.addEventListener("change", () => {
  const q = camera.quaternion;
  panel.cameraMoved({
    p: [camera.position.x, camera.position.y, camera.position.z],
    q: [q.x, q.y, q.z, q.w],
  });
});

let lastFrame = performance.now();
function frame(): void {
  requestAnimationFrame(frame);
  const now = performance.now();
  const dt = (now - lastFrame) / 1000;
  lastFrame = now;
  orbit.update();
  if (liveGroup) advanceAnimations(liveGroup, dt);
  renderer.render(scene, camera);
}

resize();
client.start();
frame();

export { lastSnapshot };
