/** A hand-cranked WebSocket stand-in for driving BridgeClient in tests. */

import type { SocketLike } from "../src/bridgeClient.js";

export class FakeSocket implements SocketLike {
  readonly sent: string[] = [];
  closed = false;

  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;

  send(data: string): void {
    if (this.closed) throw new Error("socket is closed");
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }

  open(): void {
    this.onopen?.();
  }

  receive(msg: unknown): void {
    this.onmessage?.({ data: typeof msg === "string" ? msg : JSON.stringify(msg) });
  }

  drop(): void {
    this.closed = true;
    this.onclose?.();
  }
}

/** Factory that records every socket it created. */
export function fakeSocketFactory(): {
  sockets: FakeSocket[];
  make: (url: string) => FakeSocket;
} {
  const sockets: FakeSocket[] = [];
  return {
    sockets,
    make: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
  };
}
