// Console state reduced from the telemetry stream. The console holds no
// mission state of its own: everything displayed re-derives from the last
// received messages, so reconnecting mid-run shows the same truth.

import {
  EventMsg,
  FrameMsg,
  FsmState,
  MissionAction,
  ServerMsg,
  StateMsg,
  enabledActions,
} from "./protocol.js";

export const STALE_AFTER_MS = 1000;
const EVENT_FEED_LIMIT = 500;

export interface PendingAction {
  action: MissionAction;
  sinceFsm: FsmState;
}

export class ConsoleStore {
  state: StateMsg | null = null;
  frame: FrameMsg | null = null;
  events: EventMsg[] = [];
  connected = false;
  lastMessageAt: number | null = null;
  pending: PendingAction | null = null;
  lastError: string | null = null;
  private listeners: Array<() => void> = [];

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  markConnected(): void {
    this.connected = true;
    this.lastError = null;
    this.emit();
  }

  markDisconnected(): void {
    this.connected = false;
    this.emit();
  }

  setError(message: string): void {
    this.lastError = message;
    this.emit();
  }

  apply(msg: ServerMsg, now: number): void {
    this.lastMessageAt = now;
    if (msg.type === "state") {
      // the server is the source of truth: once it reports a state other
      // than the one we acted in, the pending action has been resolved
      if (this.pending && msg.fsm !== this.pending.sinceFsm) {
        this.pending = null;
      }
      this.state = msg;
    } else if (msg.type === "frame") {
      // frames can arrive out of order: older sim timestamps are dropped
      if (this.frame === null || msg.t >= this.frame.t) {
        this.frame = msg;
      }
    } else {
      if (msg.kind === "illegal") {
        this.pending = null;
        this.lastError = `rejected: ${JSON.stringify(msg.payload)}`;
      }
      this.events.push(msg);
      if (this.events.length > EVENT_FEED_LIMIT) {
        this.events.splice(0, this.events.length - EVENT_FEED_LIMIT);
      }
    }
    this.emit();
  }

  notePending(action: MissionAction): void {
    if (this.state !== null) {
      this.pending = { action, sinceFsm: this.state.fsm };
    }
    this.emit();
  }

  fsm(): FsmState | null {
    return this.state ? this.state.fsm : null;
  }

  /** Mission actions currently clickable: protocol gating minus an in-flight action. */
  enabled(action: MissionAction): boolean {
    if (!this.connected) return false;
    if (this.pending !== null) return false;
    return enabledActions(this.fsm()).has(action);
  }

  isStale(now: number): boolean {
    if (this.lastMessageAt === null) return true;
    return now - this.lastMessageAt > STALE_AFTER_MS;
  }

  simClock(): number | null {
    return this.state ? this.state.t : null;
  }

  thrustFraction(): number {
    return this.state ? this.state.thrust_frac : 0;
  }
}
