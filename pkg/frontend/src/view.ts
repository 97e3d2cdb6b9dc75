// DOM rendering: depth canvas with detection overlay, FSM diagram, action
// buttons, event feed, and the status bar with the staleness banner.

import { ConsoleClient } from "./client.js";
import { DEPTH_MAX_M, DEPTH_MIN_M, decodeDepth, depthToRgba } from "./depth.js";
import { FSM_STATES, FrameMsg, MissionAction } from "./protocol.js";
import { ConsoleStore } from "./store.js";

const ACTION_LABELS: Array<[MissionAction, string]> = [
  ["confirm_detection", "Confirm detection"],
  ["engage_perch", "Engage perch"],
  ["abort", "Abort"],
];

export class ConsoleView {
  private canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D;
  private buttons = new Map<MissionAction, HTMLButtonElement>();
  private diagram = new Map<string, HTMLElement>();
  private feed: HTMLElement;
  private status: HTMLElement;
  private banner: HTMLElement;
  private errorBox: HTMLElement;
  private renderedEvents = 0;
  private renderedFrameT = -1;

  constructor(root: HTMLElement, private store: ConsoleStore, private client: ConsoleClient) {
    root.innerHTML = "";
    this.status = el("div", "status");
    this.banner = el("div", "banner hidden");
    this.banner.textContent = "TELEMETRY STALE";
    const main = el("div", "main");

    const left = el("div", "left");
    this.canvas = document.createElement("canvas");
    this.canvas.width = 320;
    this.canvas.height = 240;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d canvas context");
    this.ctx = ctx;
    left.appendChild(this.canvas);

    const controls = el("div", "controls");
    for (const [action, label] of ACTION_LABELS) {
      const btn = document.createElement("button");
      btn.textContent = label;
      btn.disabled = true;
      btn.onclick = () => this.client.sendAction(action);
      btn.dataset.action = action;
      this.buttons.set(action, btn);
      controls.appendChild(btn);
    }
    const speeds = el("div", "speeds");
    for (const [label, factor] of [["pause", 0], ["1x", 1], ["4x", 4]] as const) {
      const btn = document.createElement("button");
      btn.textContent = label;
      btn.onclick = () => this.client.setSpeed(factor);
      speeds.appendChild(btn);
    }
    controls.appendChild(speeds);
    this.errorBox = el("div", "error hidden");
    left.appendChild(controls);
    left.appendChild(this.errorBox);

    const right = el("div", "right");
    const diagram = el("div", "diagram");
    for (const state of FSM_STATES) {
      const node = el("div", "node");
      node.textContent = state;
      this.diagram.set(state, node);
      diagram.appendChild(node);
    }
    this.feed = el("ul", "feed");
    right.appendChild(diagram);
    right.appendChild(this.feed);

    main.appendChild(left);
    main.appendChild(right);
    root.appendChild(this.status);
    root.appendChild(this.banner);
    root.appendChild(main);

    store.onChange(() => this.render());
    setInterval(() => this.renderStatus(), 250); // staleness is time-driven
  }

  private renderStatus(): void {
    const now = Date.now();
    const parts: string[] = [];
    parts.push(this.store.connected ? "connected" : "disconnected");
    const clock = this.store.simClock();
    if (clock !== null) parts.push(`t=${clock.toFixed(1)}s`);
    const fsm = this.store.fsm();
    if (fsm !== null) parts.push(fsm);
    parts.push(`thrust ${(this.store.thrustFraction() * 100).toFixed(0)}%`);
    this.status.textContent = parts.join(" | ");
    this.banner.classList.toggle("hidden", !this.store.isStale(now));
  }

  private render(): void {
    this.renderStatus();
    const fsm = this.store.fsm();
    for (const [state, node] of this.diagram) {
      node.classList.toggle("active", state === fsm);
    }
    for (const [action, btn] of this.buttons) {
      btn.disabled = !this.store.enabled(action);
    }
    this.errorBox.classList.toggle("hidden", this.store.lastError === null);
    if (this.store.lastError !== null) this.errorBox.textContent = this.store.lastError;

    const frame = this.store.frame;
    if (frame !== null && frame.t !== this.renderedFrameT) {
      this.renderedFrameT = frame.t;
      this.drawFrame(frame);
    }
    // event feed appends in arrival order
    for (; this.renderedEvents < this.store.events.length; this.renderedEvents++) {
      const ev = this.store.events[this.renderedEvents];
      const li = document.createElement("li");
      li.textContent = `${ev.t.toFixed(2)}s ${ev.kind} ${JSON.stringify(ev.payload)}`;
      this.feed.appendChild(li);
      this.feed.scrollTop = this.feed.scrollHeight;
    }
  }

  private drawFrame(frame: FrameMsg): void {
    if (this.canvas.width !== frame.width || this.canvas.height !== frame.height) {
      this.canvas.width = frame.width;
      this.canvas.height = frame.height;
    }
    const depth = decodeDepth(frame.depth_mm_b64, frame.width, frame.height);
    const rgba = depthToRgba(depth, DEPTH_MIN_M, DEPTH_MAX_M);
    const image = new ImageData(new Uint8ClampedArray(rgba), frame.width, frame.height);
    this.ctx.putImageData(image, 0, 0);
    if (frame.bbox) {
      const [c0, r0, c1, r1] = frame.bbox;
      this.ctx.strokeStyle = "#2ecc71";
      this.ctx.lineWidth = 2;
      this.ctx.strokeRect(c0, r0, c1 - c0 + 1, r1 - r0 + 1);
    }
    if (frame.centroid) {
      const [u, v] = frame.centroid;
      this.ctx.fillStyle = "#e74c3c";
      this.ctx.beginPath();
      this.ctx.arc(u, v, 3, 0, 2 * Math.PI);
      this.ctx.fill();
    }
    if (frame.diameter !== undefined) {
      this.ctx.fillStyle = "#2ecc71";
      this.ctx.font = "12px monospace";
      this.ctx.fillText(`d=${frame.diameter.toFixed(2)}m`, 6, 14);
    }
  }
}

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}
