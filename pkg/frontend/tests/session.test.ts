import { describe, expect, it } from "vitest";

import { ProtocolError } from "../src/protocol.js";
import { SessionClient, SocketLike } from "../src/session.js";
import fixtures from "./fixtures/protocol_fixtures.json";

/** Scripted server double: replies are queued per incoming message type. */
class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: Record<string, unknown>[] = [];
  closed = false;

  constructor(private replies: (msg: Record<string, unknown>) => unknown) {}

  open(): void {
    this.onopen?.();
  }

  send(data: string): void {
    const msg = JSON.parse(data) as Record<string, unknown>;
    this.sent.push(msg);
    const reply = this.replies(msg);
    if (reply !== undefined) {
      queueMicrotask(() => this.onmessage?.({ data: JSON.stringify(reply) }));
    }
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }
}

function scriptedClient(replies: (msg: Record<string, unknown>) => unknown) {
  let socket: FakeSocket | null = null;
  const errors: string[] = [];
  const states: unknown[] = [];
  const client = new SessionClient(
    () => {
      socket = new FakeSocket(replies);
      queueMicrotask(() => socket!.open());
      return socket;
    },
    { onState: (m) => states.push(m), onError: (m) => errors.push(m) },
  );
  return { client, errors, states, socket: () => socket! };
}

describe("SessionClient", () => {
  it("handshakes and stores the session id", async () => {
    const { client } = scriptedClient((msg) =>
      msg.type === "open" ? fixtures.opened : undefined);
    const opened = await client.connect("ws://test", { algorithm: "bifurcation" });
    expect(opened.skeleton.name).toContain("synth");
    expect(client.sessionId).toBe(fixtures.opened.session_id);
  });

  it("rejects on a server error reply", async () => {
    const { client } = scriptedClient(() => ({ type: "error", message: "session limit reached" }));
    await expect(client.connect("ws://test", {})).rejects.toThrow(/session limit/);
  });

  it("rejects on a schema version mismatch", async () => {
    const stale = { ...fixtures.opened, schema_version: "0" };
    const { client } = scriptedClient(() => stale);
    await expect(client.connect("ws://test", {})).rejects.toThrow(ProtocolError);
  });

  it("passes the stored session id when reconnecting", async () => {
    const replies = (msg: Record<string, unknown>) =>
      msg.type === "open" ? fixtures.opened : undefined;
    const { client, socket } = scriptedClient(replies);
    await client.connect("ws://test", {});
    client.close();
    await client.connect("ws://test", {});
    const openMsgs = socket().sent.filter((m) => m.type === "open");
    expect(openMsgs[0].session_id).toBe(fixtures.opened.session_id);
  });

  it("dispatches states and surfaces post-handshake errors", async () => {
    const { client, errors, states, socket } = scriptedClient((msg) => {
      if (msg.type === "open") return fixtures.opened;
      if (msg.type === "steer") return fixtures.state_dead_reckon;
      return undefined;
    });
    await client.connect("ws://test", {});
    client.send({ type: "steer", insert_mm: 1.0 });
    await new Promise((r) => setTimeout(r, 0));
    expect(states).toHaveLength(1);

    socket().onmessage?.({ data: "garbage!!" });
    expect(errors.length).toBe(1);

    socket().onmessage?.({ data: JSON.stringify({ type: "error", message: "bad steer" }) });
    expect(errors).toContain("bad steer");
  });

  it("resolves requestLog with the server log", async () => {
    const { client } = scriptedClient((msg) => {
      if (msg.type === "open") return fixtures.opened;
      if (msg.type === "get_log") {
        return { type: "log", trajectory: ["t0"], estimates: ["e0", "e1"] };
      }
      return undefined;
    });
    await client.connect("ws://test", {});
    const log = await client.requestLog();
    expect(log.estimates).toEqual(["e0", "e1"]);
  });
});
