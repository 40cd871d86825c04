/**
 * WebSocket client with reconnection.
 *
 * The twin's console feed is a plain text-frame stream of wire lines. The
 * client decodes each frame, hands messages to a callback, and reconnects
 * on close with exponential backoff: 0.5 s doubling to a 10 s cap. The
 * socket factory is injectable so tests can drive the client without a
 * network.
 */

import { decodeLine, type TwinMessage } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  // handler params are `any` so the DOM WebSocket is structurally assignable
  onopen: ((ev?: any) => void) | null;
  onclose: ((ev?: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onerror: ((ev?: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export const BACKOFF_INITIAL_MS = 500;
export const BACKOFF_CAP_MS = 10_000;

export interface ClientCallbacks {
  onMessage: (msg: TwinMessage) => void;
  onStatus: (status: "connected" | "reconnecting" | "lost") => void;
  onDecodeError?: (line: string, error: Error) => void;
}

export function nextBackoff(previousMs: number): number {
  return Math.min(previousMs * 2, BACKOFF_CAP_MS);
}

export class ConsoleClient {
  private socket: SocketLike | null = null;
  private backoffMs = BACKOFF_INITIAL_MS;
  private stopped = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly callbacks: ClientCallbacks,
    private readonly factory: SocketFactory,
    private readonly schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout,
  ) {}

  connect(): void {
    if (this.stopped) return;
    this.callbacks.onStatus("reconnecting");
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = BACKOFF_INITIAL_MS;
      this.callbacks.onStatus("connected");
    };
    socket.onmessage = (ev) => {
      const line = typeof ev.data === "string" ? ev.data : "";
      try {
        this.callbacks.onMessage(decodeLine(line));
      } catch (exc) {
        this.callbacks.onDecodeError?.(line, exc as Error);
      }
    };
    socket.onclose = () => this.scheduleReconnect();
    socket.onerror = () => {
      // close always follows an error; reconnection is handled there
    };
  }

  /** Send one already-encoded wire line; false when not connected. */
  sendLine(line: string): boolean {
    if (this.socket === null) return false;
    try {
      this.socket.send(line);
      return true;
    } catch {
      return false;
    }
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
    this.callbacks.onStatus("lost");
  }

  get currentBackoffMs(): number {
    return this.backoffMs;
  }

  private scheduleReconnect(): void {
    if (this.stopped) return;
    this.callbacks.onStatus("reconnecting");
    const delay = this.backoffMs;
    this.backoffMs = nextBackoff(this.backoffMs);
    this.timer = this.schedule(() => this.connect(), delay);
  }
}
