// WebSocket client with reconnect. The socket implementation is injectable
// so the logic is testable without a browser.

import { reconnectDelay } from "./backoff.js";
import { MissionAction, actionMessage, parseMessage, speedMessage } from "./protocol.js";
import { ConsoleStore } from "./store.js";

export interface SocketLike {
  readyState: number;
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

const OPEN = 1;

export class ConsoleClient {
  private socket: SocketLike | null = null;
  private attempt = 0;
  private closed = false;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private store: ConsoleStore,
    private factory: SocketFactory,
    private now: () => number = () => Date.now()
  ) {}

  connect(): void {
    this.closed = false;
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.attempt = 0;
      this.store.markConnected();
    };
    sock.onmessage = (ev) => {
      const msg = parseMessage(String(ev.data));
      if (msg !== null) this.store.apply(msg, this.now());
    };
    sock.onerror = () => {
      /* onclose follows and handles scheduling */
    };
    sock.onclose = () => {
      this.store.markDisconnected();
      if (!this.closed) this.scheduleReconnect();
    };
  }

  private scheduleReconnect(): void {
    const delay = reconnectDelay(this.attempt);
    this.attempt += 1;
    this.reconnectTimer = setTimeout(() => this.connect(), delay);
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.socket?.close();
  }

  /** Send a mission action; on a closed socket the action is discarded with a visible error. */
  sendAction(action: MissionAction): boolean {
    if (!this.socket || this.socket.readyState !== OPEN) {
      this.store.setError(`not connected: ${action} discarded`);
      return false;
    }
    if (!this.store.enabled(action)) {
      return false;
    }
    this.socket.send(actionMessage(action));
    this.store.notePending(action);
    return true;
  }

  setSpeed(factor: number): void {
    if (this.socket && this.socket.readyState === OPEN) {
      this.socket.send(speedMessage(factor));
    }
  }
}
