import { describe, expect, it } from "vitest";

import { StateMessage } from "../src/protocol.js";
import { StateLog, reduceState } from "../src/viewstate.js";
import fixtures from "./fixtures/protocol_fixtures.json";

const realState = fixtures.state2 as unknown as StateMessage;

function syntheticState(tick: number, withEstimate: boolean): StateMessage {
  return {
    type: "state",
    tick,
    t: tick / 30,
    insertion: tick * 2.0,
    true_pose: { position: [0, 0, 10], rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1], rotation_format: "rowmajor9" },
    est_pose: withEstimate
      ? { position: [0, 0, 10], rotation: [1, 0, 0, 0, 1, 0, 0, 0, 1], rotation_format: "rowmajor9" }
      : null,
    true_visible: [0, 1],
    est_visible: withEstimate ? [0, 1] : [],
    assignment: {},
    bif_correct: false,
    e_p: withEstimate ? 0.0 : null,
    e_d: withEstimate ? 0.0 : null,
    e_r: withEstimate ? 0.0 : null,
    f1_by_generation: { "0": 1.0, "1": 0.5 },
    diagnostics: { mode: "dead_reckon", candidates: [] },
  };
}

describe("reduceState", () => {
  it("reduces a real update-mode state", () => {
    const view = reduceState(realState);
    expect(view.tick).toBe(realState.tick);
    expect(view.noFix).toBe(false);
    expect(view.candidates.length).toBeGreaterThan(0);
    expect(view.mode).toBe("update");
    expect(view.trueVisible.size).toBe(realState.true_visible.length);
    // pointing axis is the third rotation column, unit length
    const p = view.truePointing;
    expect(Math.hypot(p[0], p[1], p[2])).toBeCloseTo(1.0, 9);
  });

  it("exact estimate: markers coincide and e_p reads zero", () => {
    const view = reduceState(syntheticState(3, true));
    expect(view.estPosition).toEqual(view.truePosition);
    expect(view.eP).toBe(0.0);
    expect(view.noFix).toBe(false);
  });

  it("empty estimate: marker hidden, no-fix badge", () => {
    const view = reduceState(syntheticState(4, false));
    expect(view.estPosition).toBeNull();
    expect(view.estPointing).toBeNull();
    expect(view.noFix).toBe(true);
    expect(view.eP).toBeNull();
  });

  it("indexes F1 by numeric generation", () => {
    const view = reduceState(syntheticState(0, true));
    expect(view.f1ByGeneration.get(1)).toBe(0.5);
  });
});

describe("StateLog ring buffer", () => {
  it("holds at most its capacity across a long soak", () => {
    const log = new StateLog(256);
    for (let i = 0; i < 5000; i++) log.push(syntheticState(i, i % 3 !== 0));
    expect(log.length).toBe(256);
    expect(log.latest()?.tick).toBe(4999);
    expect(log.at(0).tick).toBe(5000 - 256);
    // strictly ordered window
    for (let i = 1; i < log.length; i++) {
      expect(log.at(i).tick).toBe(log.at(i - 1).tick + 1);
    }
  });

  it("epSeries tracks the retained window including null gaps", () => {
    const log = new StateLog(8);
    for (let i = 0; i < 12; i++) log.push(syntheticState(i, i % 2 === 0));
    const series = log.epSeries();
    expect(series).toHaveLength(8);
    expect(series.filter((v) => v === null).length).toBeGreaterThan(0);
  });

  it("rejects nonsense capacity and out-of-range access", () => {
    expect(() => new StateLog(0)).toThrow();
    const log = new StateLog(4);
    expect(() => log.at(0)).toThrow(RangeError);
    expect(log.latest()).toBeNull();
  });
});
