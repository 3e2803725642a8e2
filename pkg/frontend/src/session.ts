// WebSocket session client: handshake, schema negotiation, reconnect.
// The socket constructor is injectable so tests can run against a scripted
// double; the browser passes the native WebSocket.

import {
  LogMessage,
  OpenedMessage,
  ProtocolError,
  ServerMessage,
  openMessage,
  parseServerMessage,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface SessionHandlers {
  onState?: (msg: ServerMessage) => void;
  onError?: (message: string) => void;
  onClose?: () => void;
}

export class SessionClient {
  private socket: SocketLike | null = null;
  sessionId: string | null = null;
  opened: OpenedMessage | null = null;
  private pendingLog: ((log: LogMessage) => void)[] = [];

  constructor(
    private makeSocket: SocketFactory,
    private handlers: SessionHandlers = {},
  ) {}

  /** Open (or resume) a session; resolves with the opened handshake. */
  connect(endpoint: string, config: unknown, sessionId?: string): Promise<OpenedMessage> {
    return new Promise((resolve, reject) => {
      const socket = this.makeSocket(endpoint);
      this.socket = socket;
      let settled = false;

      socket.onopen = () => {
        socket.send(JSON.stringify(openMessage(config, sessionId ?? this.sessionId ?? undefined)));
      };
      socket.onmessage = (ev) => {
        let msg: ServerMessage;
        try {
          msg = parseServerMessage(String(ev.data));
        } catch (e) {
          if (!settled && e instanceof ProtocolError) {
            settled = true;
            reject(e);
            return;
          }
          this.handlers.onError?.(String(e));
          return;
        }
        if (!settled) {
          settled = true;
          if (msg.type === "opened") {
            this.sessionId = msg.session_id;
            this.opened = msg;
            resolve(msg);
          } else if (msg.type === "error") {
            reject(new ProtocolError(msg.message));
          } else {
            reject(new ProtocolError(`unexpected first message ${msg.type}`));
          }
          return;
        }
        this.dispatch(msg);
      };
      socket.onclose = () => {
        this.handlers.onClose?.();
        if (!settled) {
          settled = true;
          reject(new ProtocolError("socket closed before handshake"));
        }
      };
      socket.onerror = () => {
        if (!settled) {
          settled = true;
          reject(new ProtocolError("socket error before handshake"));
        }
      };
    });
  }

  private dispatch(msg: ServerMessage): void {
    if (msg.type === "error") {
      this.handlers.onError?.(msg.message);
      return;
    }
    if (msg.type === "log") {
      const waiter = this.pendingLog.shift();
      if (waiter) waiter(msg);
      return;
    }
    this.handlers.onState?.(msg);
  }

  send(message: unknown): void {
    if (!this.socket) throw new Error("no open session");
    this.socket.send(JSON.stringify(message));
  }

  requestLog(): Promise<LogMessage> {
    return new Promise((resolve) => {
      this.pendingLog.push(resolve);
      this.send({ type: "get_log" });
    });
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
  }
}
