// Wire types for the bronchotrack session protocol (schema version "1").
// The console is a pure view/controller: every number it displays originates
// from these server messages.

export const SCHEMA_VERSION = "1";

export interface PoseWire {
  position: [number, number, number];
  rotation: number[]; // row-major 9 by default
  rotation_format: string;
}

export interface AirwayWire {
  id: number;
  parent_id: number | null;
  children: number[];
  generation: number;
  centerline: number[][];
}

export interface SkeletonWire {
  version: number;
  name: string;
  airways: AirwayWire[];
}

export interface CandidateWire {
  bif: number;
  prob_ins: number;
  prob_airways: number;
  prob_x: number;
  prob_roll: number;
  prob_fit: number;
  posterior: number;
  roll_deg: number;
  assignment: Record<string, number>;
  implied_position: number[] | null;
}

export interface DiagnosticsWire {
  mode: string;
  z_hat_bif?: number | null;
  chosen_bif?: number | null;
  note?: string;
  candidates?: CandidateWire[];
  [key: string]: unknown;
}

export interface OpenedMessage {
  type: "opened";
  session_id: string;
  schema_version: string;
  resumed: boolean;
  tick: number;
  skeleton: SkeletonWire;
}

export interface StateMessage {
  type: "state";
  tick: number;
  t: number;
  insertion: number;
  true_pose: PoseWire;
  est_pose: PoseWire | null;
  true_visible: number[];
  est_visible: number[];
  assignment: Record<string, number>;
  bif_correct: boolean;
  e_p: number | null;
  e_d: number | null;
  e_r: number | null;
  f1_by_generation: Record<string, number>;
  diagnostics: DiagnosticsWire;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export interface LogMessage {
  type: "log";
  trajectory: string[];
  estimates: string[];
}

export interface ClosedMessage {
  type: "closed";
  session_id: string;
}

export type ServerMessage =
  | OpenedMessage
  | StateMessage
  | ErrorMessage
  | LogMessage
  | ClosedMessage;

export interface SteerMessage {
  type: "steer";
  pitch_deg: number;
  yaw_deg: number;
  roll_deg: number;
  insert_mm: number;
}

export function openMessage(config: unknown, sessionId?: string) {
  const msg: Record<string, unknown> = {
    type: "open",
    schema_version: SCHEMA_VERSION,
    config,
  };
  if (sessionId) msg.session_id = sessionId;
  return msg;
}

export function steerMessage(
  pitchDeg: number,
  yawDeg: number,
  rollDeg: number,
  insertMm: number,
): SteerMessage {
  return {
    type: "steer",
    pitch_deg: pitchDeg,
    yaw_deg: yawDeg,
    roll_deg: rollDeg,
    insert_mm: insertMm,
  };
}

const SERVER_TYPES = new Set(["opened", "state", "error", "log", "closed"]);

export class ProtocolError extends Error {}

export function parseServerMessage(raw: string): ServerMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (e) {
    throw new ProtocolError(`unparseable server message: ${e}`);
  }
  if (typeof doc !== "object" || doc === null || !("type" in doc)) {
    throw new ProtocolError("server message is not an object with a 'type'");
  }
  const type = (doc as { type: unknown }).type;
  if (typeof type !== "string" || !SERVER_TYPES.has(type)) {
    throw new ProtocolError(`unknown server message type ${String(type)}`);
  }
  if (type === "state") {
    const s = doc as StateMessage;
    if (typeof s.tick !== "number" || !s.true_pose || !Array.isArray(s.true_visible)) {
      throw new ProtocolError("malformed state message");
    }
  }
  if (type === "opened") {
    const o = doc as OpenedMessage;
    if (o.schema_version !== SCHEMA_VERSION) {
      throw new ProtocolError(
        `schema version mismatch: server ${o.schema_version}, client ${SCHEMA_VERSION}`,
      );
    }
  }
  return doc as ServerMessage;
}
