// Console entry point: wires the keyboard, the session socket and the canvas.

import { SCHEMA_VERSION, StateMessage } from "./protocol.js";
import { renderTick } from "./render.js";
import { SessionClient } from "./session.js";
import { DEFAULT_STEERING, SteeringInput } from "./steering.js";
import { StateLog, reduceState } from "./viewstate.js";

const TICK_HZ = 30;

const DEFAULT_CONFIG = {
  algorithm: "bifurcation",
  synth: { generations: 5, seed: 7 },
  sim: { frame_rate_hz: TICK_HZ },
  noise: {
    sigma_pos_mm: 2.0,
    sigma_ang_deg: 11.0,
    sigma_roll_deg: 14.0,
    seed: 0,
  },
};

function banner(text: string, isError = false): void {
  const el = document.getElementById("banner");
  if (el) {
    el.textContent = text;
    el.className = isError ? "banner error" : "banner";
  }
}

async function start(): Promise<void> {
  const canvas = document.getElementById("view") as HTMLCanvasElement | null;
  if (!canvas) throw new Error("missing #view canvas");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d context unavailable");

  const params = new URLSearchParams(window.location.search);
  const endpoint = params.get("ws") ?? `ws://${window.location.hostname || "127.0.0.1"}:8700/session`;

  const log = new StateLog(1024);
  const steering = new SteeringInput(DEFAULT_STEERING);
  const client = new SessionClient((url) => new WebSocket(url) as never, {
    onState: (msg) => {
      if (msg.type === "state") {
        log.push(msg as StateMessage);
        renderTick(ctx, client.opened!.skeleton, reduceState(msg as StateMessage), canvas.width, canvas.height);
      }
    },
    onError: (message) => banner(message, true),
    onClose: () => banner("connection closed; reload to reconnect", true),
  });

  window.addEventListener("keydown", (ev) => {
    if (steering.keyDown(ev.code)) ev.preventDefault();
  });
  window.addEventListener("keyup", (ev) => steering.keyUp(ev.code));

  banner(`connecting to ${endpoint} (schema ${SCHEMA_VERSION})`);
  try {
    const opened = await client.connect(endpoint, DEFAULT_CONFIG);
    banner(`session ${opened.session_id.slice(0, 8)} on ${opened.skeleton.name}; ` +
      "arrows steer, W/S insert/retract, Q/E roll");
  } catch (e) {
    banner(`cannot open session: ${e}`, true);
    return;
  }

  // one steering message per tick; the server answers each with a state
  window.setInterval(() => client.send(steering.tickMessage()), 1000 / TICK_HZ);
}

start().catch((e) => banner(String(e), true));
