// Wire protocol shared with the simulator bridge. The gating table below is
// the single source of truth for which mission action each FSM state allows:
// the buttons derive from it rather than duplicating transition logic.

export const PROTOCOL_VERSION = 1;

export const FSM_STATES = [
  "Idle",
  "SearchTree",
  "AwaitDetectConfirm",
  "Planning",
  "FlyToPerch",
  "AwaitPerchConfirm",
  "PerchSequence",
  "Perched",
  "FreeFallDetected",
  "Recovering",
  "SafeHover",
  "Landed",
  "Aborted",
] as const;

export type FsmState = (typeof FSM_STATES)[number];

export type MissionAction = "confirm_detection" | "engage_perch" | "abort";

// the two human gates and the confirmation each one consumes
export const GATE_ACTIONS: Partial<Record<FsmState, MissionAction>> = {
  AwaitDetectConfirm: "confirm_detection",
  AwaitPerchConfirm: "engage_perch",
};

export const TERMINAL_STATES: ReadonlySet<string> = new Set([
  "SafeHover",
  "Landed",
  "Aborted",
]);

/** Mission actions the console may offer in a given FSM state. */
export function enabledActions(state: FsmState | null): Set<MissionAction> {
  const out = new Set<MissionAction>();
  if (state === null) return out;
  const gate = GATE_ACTIONS[state];
  if (gate) out.add(gate);
  out.add("abort"); // abort is always available
  return out;
}

export interface StateMsg {
  v: number;
  type: "state";
  t: number;
  fsm: FsmState;
  position: [number, number, number];
  velocity: [number, number, number];
  yaw: number;
  setpoint: [number, number, number];
  thrust: number;
  thrust_frac: number;
}

export interface FrameMsg {
  v: number;
  type: "frame";
  t: number;
  width: number;
  height: number;
  depth_mm_b64: string;
  bbox?: [number, number, number, number];
  centroid?: [number, number];
  diameter?: number;
  flags?: { diameter_ok: boolean; texture_ok: boolean; overhang_ok: boolean };
}

export interface EventMsg {
  v: number;
  type: "event";
  t: number;
  kind: string;
  payload: Record<string, unknown>;
}

export type ServerMsg = StateMsg | FrameMsg | EventMsg;

/** Parse one raw server message; unknown or malformed input yields null. */
export function parseMessage(raw: string): ServerMsg | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as Record<string, unknown>;
  if (m.v !== PROTOCOL_VERSION) return null;
  if (m.type === "state" || m.type === "frame" || m.type === "event") {
    return m as unknown as ServerMsg;
  }
  return null;
}

export function actionMessage(action: MissionAction): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, type: action });
}

export function speedMessage(factor: number): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, type: "set_speed", factor });
}
