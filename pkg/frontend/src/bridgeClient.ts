/**
 * WebSocket connection to the core's bridge.
 *
 * One connection, owned by one client instance. When the socket drops
 * unexpectedly the client reconnects on its own with exponential backoff
 * (1 s doubling to a 30 s cap), resetting the delay after a successful open.
 * Control messages get a client-chosen correlation id and resolve with the
 * matching ack from the core; a dropped connection rejects everything still
 * pending, because the core will never answer a request it never saw.
 */

import type { AckMessage, ControlBody, ServerMessage } from "./types.js";
import { parseServerMessage } from "./types.js";

export type ConnectionState = "connecting" | "open" | "backoff" | "closed";

/** What control-sending UI needs from the client; eases fakes in tests. */
export interface ControlChannel {
  readonly state: ConnectionState;
  request(body: ControlBody): Promise<AckMessage>;
}

/** The few WebSocket members the client actually uses, for injectability. */
export interface SocketLike {
  send(data: string): void;
  close(code?: number, reason?: string): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
}

export interface BridgeClientOptions {
  /** Socket factory; defaults to the platform WebSocket. Tests inject fakes. */
  makeSocket?: (url: string) => SocketLike;
  /** First reconnect delay in ms. */
  baseDelayMs?: number;
  /** Reconnect delay ceiling in ms. */
  maxDelayMs?: number;
}

interface Pending {
  resolve: (ack: AckMessage) => void;
  reject: (err: Error) => void;
}

export class BridgeClient implements ControlChannel {
  readonly url: string;

  private readonly makeSocket: (url: string) => SocketLike;
  private readonly baseDelayMs: number;
  private readonly maxDelayMs: number;

  private socket: SocketLike | null = null;
  private stateValue: ConnectionState = "closed";
  private attempts = 0;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private closedByUser = false;
  private nextId = 1;
  private readonly pending = new Map<string, Pending>();
  private readonly messageHandlers = new Set<(msg: ServerMessage) => void>();
  private readonly stateHandlers = new Set<(s: ConnectionState) => void>();

  constructor(url: string, opts: BridgeClientOptions = {}) {
    this.url = url;
    this.makeSocket =
      opts.makeSocket ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.baseDelayMs = opts.baseDelayMs ?? 1000;
    this.maxDelayMs = opts.maxDelayMs ?? 30000;
  }

  get state(): ConnectionState {
    return this.stateValue;
  }

  /** Delay before reconnect attempt n (0-based): 1 s, 2 s, 4 s ... 30 s cap. */
  delayFor(attempt: number): number {
    return Math.min(this.baseDelayMs * 2 ** attempt, this.maxDelayMs);
  }

  onMessage(handler: (msg: ServerMessage) => void): () => void {
    this.messageHandlers.add(handler);
    return () => this.messageHandlers.delete(handler);
  }

  onState(handler: (s: ConnectionState) => void): () => void {
    this.stateHandlers.add(handler);
    return () => this.stateHandlers.delete(handler);
  }

  connect(): void {
    if (this.socket !== null || this.reconnectTimer !== null) {
      return; // already connected or scheduled; never a second socket
    }
    this.closedByUser = false;
    this.open();
  }

  close(): void {
    this.closedByUser = true;
    if (this.reconnectTimer !== null) {
      clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    const sock = this.socket;
    this.socket = null;
    if (sock !== null) {
      sock.onopen = sock.onclose = sock.onerror = sock.onmessage = null;
      sock.close();
    }
    this.failPending("bridge connection closed");
    this.setState("closed");
  }

  /**
   * Send a control message and resolve with the core's ack. Rejects
   * immediately when the bridge is down -- callers gate their UI on that
   * instead of queueing silently.
   */
  request(body: ControlBody): Promise<AckMessage> {
    if (this.stateValue !== "open" || this.socket === null) {
      return Promise.reject(new Error("bridge is not connected"));
    }
    const id = `req-${this.nextId++}`;
    const message = { ...body, id };
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
      try {
        this.socket!.send(JSON.stringify(message));
      } catch (err) {
        this.pending.delete(id);
        reject(err instanceof Error ? err : new Error(String(err)));
      }
    });
  }

  private open(): void {
    this.reconnectTimer = null;
    this.setState("connecting");
    let sock: SocketLike;
    try {
      sock = this.makeSocket(this.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    this.socket = sock;
    sock.onopen = () => {
      this.attempts = 0;
      this.setState("open");
    };
    sock.onmessage = (ev) => {
      if (typeof ev.data !== "string") return;
      const msg = parseServerMessage(ev.data);
      if (msg === null) return;
      if (msg.type === "ack") {
        const entry = this.pending.get(String(msg.id));
        if (entry !== undefined) {
          this.pending.delete(String(msg.id));
          entry.resolve(msg);
        }
        return;
      }
      for (const handler of this.messageHandlers) handler(msg);
    };
    sock.onerror = () => {
      // the close handler does the bookkeeping; browsers fire both
    };
    sock.onclose = () => {
      if (this.socket !== sock) return; // stale socket from before a close()
      this.socket = null;
      this.failPending("bridge connection lost");
      if (this.closedByUser) {
        this.setState("closed");
      } else {
        this.scheduleReconnect();
      }
    };
  }

  private scheduleReconnect(): void {
    this.setState("backoff");
    const delay = this.delayFor(this.attempts);
    this.attempts += 1;
    this.reconnectTimer = setTimeout(() => this.open(), delay);
  }

  private failPending(reason: string): void {
    const waiting = [...this.pending.values()];
    this.pending.clear();
    for (const entry of waiting) entry.reject(new Error(reason));
  }

  private setState(s: ConnectionState): void {
    if (s === this.stateValue) return;
    this.stateValue = s;
    for (const handler of this.stateHandlers) handler(s);
  }
}
