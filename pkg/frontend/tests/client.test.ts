/**
 * Reconnection behavior: backoff doubles from 0.5 s and saturates at 10 s,
 * a successful connect resets it, and inbound frames are decoded before the
 * app sees them.
 */

import { describe, expect, it } from "vitest";

import {
  BACKOFF_CAP_MS,
  BACKOFF_INITIAL_MS,
  ConsoleClient,
  nextBackoff,
  type SocketLike,
} from "../src/client.js";
import type { TwinMessage } from "../src/protocol.js";

class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
  }
}

function harness() {
  const sockets: FakeSocket[] = [];
  const delays: number[] = [];
  const pending: Array<() => void> = [];
  const statuses: string[] = [];
  const messages: TwinMessage[] = [];
  const client = new ConsoleClient(
    "ws://test",
    {
      onMessage: (msg) => messages.push(msg),
      onStatus: (status) => statuses.push(status),
    },
    () => {
      const sock = new FakeSocket();
      sockets.push(sock);
      return sock;
    },
    (fn, ms) => {
      delays.push(ms);
      pending.push(fn);
      return 0 as unknown as ReturnType<typeof setTimeout>;
    },
  );
  const runPending = () => {
    const fn = pending.shift();
    if (fn) fn();
  };
  return { client, sockets, delays, statuses, messages, runPending };
}

describe("backoff schedule", () => {
  it("doubles and saturates at the cap", () => {
    let ms = BACKOFF_INITIAL_MS;
    const seen: number[] = [];
    for (let i = 0; i < 8; i += 1) {
      seen.push(ms);
      ms = nextBackoff(ms);
    }
    expect(seen).toEqual([500, 1000, 2000, 4000, 8000, 10000, 10000, 10000]);
    expect(Math.max(...seen)).toBe(BACKOFF_CAP_MS);
  });

  it("waits the scheduled delay between reconnects and resets on success", () => {
    const h = harness();
    h.client.connect();
    expect(h.sockets.length).toBe(1);

    h.sockets[0]!.onclose?.();
    h.runPending();
    h.sockets[1]!.onclose?.();
    h.runPending();
    h.sockets[2]!.onclose?.();
    h.runPending();
    expect(h.delays).toEqual([500, 1000, 2000]);

    h.sockets[3]!.onopen?.();
    expect(h.client.currentBackoffMs).toBe(BACKOFF_INITIAL_MS);
    expect(h.statuses[h.statuses.length - 1]).toBe("connected");
  });
});

describe("message handling", () => {
  it("decodes frames and drops malformed ones without dying", () => {
    const h = harness();
    h.client.connect();
    const sock = h.sockets[0]!;
    sock.onopen?.();
    sock.onmessage?.({
      data: '{"ver":1,"type":"state_sync","src":"physical","tick":4,"pose":[1.0,2.0,0.0]}',
    });
    sock.onmessage?.({ data: "not json" });
    sock.onmessage?.({
      data: '{"ver":1,"type":"halt_control","src":"twin","tick":5,"cause":"proximity"}',
    });
    expect(h.messages.length).toBe(2);
    expect(h.messages[0]!.type).toBe("state_sync");
    expect(h.messages[1]!.type).toBe("halt_control");
  });

  it("sends lines only while a socket exists", () => {
    const h = harness();
    expect(h.client.sendLine("x")).toBe(false);
    h.client.connect();
    h.sockets[0]!.onopen?.();
    expect(h.client.sendLine('{"k":1}')).toBe(true);
    expect(h.sockets[0]!.sent).toEqual(['{"k":1}']);
  });

  it("stops cleanly and reports lost", () => {
    const h = harness();
    h.client.connect();
    h.client.stop();
    expect(h.sockets[0]!.closed).toBe(true);
    expect(h.statuses[h.statuses.length - 1]).toBe("lost");
  });
});
