// View-state reduction and the bounded state history (ring buffer).

import { CandidateWire, StateMessage } from "./protocol.js";

export interface ViewState {
  tick: number;
  t: number;
  insertion: number;
  truePosition: [number, number, number];
  truePointing: [number, number, number];
  estPosition: [number, number, number] | null;
  estPointing: [number, number, number] | null;
  noFix: boolean;
  trueVisible: Set<number>;
  estVisible: Set<number>;
  assignment: Record<string, number>;
  bifCorrect: boolean;
  eP: number | null;
  eD: number | null;
  eR: number | null;
  f1ByGeneration: Map<number, number>;
  candidates: CandidateWire[];
  mode: string;
}

function pointing(rotation: number[]): [number, number, number] {
  // third column of the row-major 3x3 matrix is the camera axis
  return [rotation[2], rotation[5], rotation[8]];
}

export function reduceState(msg: StateMessage): ViewState {
  const f1 = new Map<number, number>();
  for (const [gen, value] of Object.entries(msg.f1_by_generation)) {
    f1.set(Number(gen), value);
  }
  return {
    tick: msg.tick,
    t: msg.t,
    insertion: msg.insertion,
    truePosition: msg.true_pose.position,
    truePointing: pointing(msg.true_pose.rotation),
    estPosition: msg.est_pose ? msg.est_pose.position : null,
    estPointing: msg.est_pose ? pointing(msg.est_pose.rotation) : null,
    noFix: msg.est_pose === null,
    trueVisible: new Set(msg.true_visible),
    estVisible: new Set(msg.est_visible),
    assignment: msg.assignment,
    bifCorrect: msg.bif_correct,
    eP: msg.e_p,
    eD: msg.e_d,
    eR: msg.e_r,
    f1ByGeneration: f1,
    candidates: msg.diagnostics.candidates ?? [],
    mode: msg.diagnostics.mode ?? "unknown",
  };
}

/** Fixed-capacity history of server states; old ticks fall off the front. */
export class StateLog {
  private buffer: StateMessage[];
  private head = 0;
  private count = 0;

  constructor(readonly capacity: number = 512) {
    if (capacity < 1) throw new Error("capacity must be >= 1");
    this.buffer = new Array(capacity);
  }

  push(msg: StateMessage): void {
    this.buffer[(this.head + this.count) % this.capacity] = msg;
    if (this.count < this.capacity) {
      this.count += 1;
    } else {
      this.head = (this.head + 1) % this.capacity;
    }
  }

  get length(): number {
    return this.count;
  }

  latest(): StateMessage | null {
    if (this.count === 0) return null;
    return this.buffer[(this.head + this.count - 1) % this.capacity];
  }

  at(i: number): StateMessage {
    if (i < 0 || i >= this.count) throw new RangeError(`index ${i} out of range`);
    return this.buffer[(this.head + i) % this.capacity];
  }

  /** e_p series over the retained window, for the divergence sparkline. */
  epSeries(): Array<number | null> {
    const out: Array<number | null> = [];
    for (let i = 0; i < this.count; i++) out.push(this.at(i).e_p);
    return out;
  }
}
