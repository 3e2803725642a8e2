import { describe, expect, it } from "vitest";

import { DEFAULT_STEERING, SteeringInput } from "../src/steering.js";

describe("SteeringInput", () => {
  it("emits zero-delta messages with no input", () => {
    const s = new SteeringInput();
    const msg = s.tickMessage();
    expect(msg).toEqual({ type: "steer", pitch_deg: 0, yaw_deg: 0, roll_deg: 0, insert_mm: 0 });
  });

  it("a held insert key yields the same positive delta every tick", () => {
    const s = new SteeringInput();
    expect(s.keyDown("KeyW")).toBe(true);
    for (let i = 0; i < 5; i++) {
      expect(s.tickMessage().insert_mm).toBe(DEFAULT_STEERING.mmPerTick);
    }
    s.keyUp("KeyW");
    expect(s.tickMessage().insert_mm).toBe(0);
  });

  it("reflects a key press in the very next tick message", () => {
    const s = new SteeringInput();
    expect(s.tickMessage().pitch_deg).toBe(0);
    s.keyDown("ArrowDown");
    expect(s.tickMessage().pitch_deg).toBe(DEFAULT_STEERING.degPerTick);
  });

  it("combines axes and opposing keys cancel", () => {
    const s = new SteeringInput();
    s.keyDown("ArrowUp");
    s.keyDown("ArrowRight");
    s.keyDown("KeyW");
    const msg = s.tickMessage();
    expect(msg.pitch_deg).toBe(-DEFAULT_STEERING.degPerTick);
    expect(msg.yaw_deg).toBe(DEFAULT_STEERING.degPerTick);
    expect(msg.insert_mm).toBe(DEFAULT_STEERING.mmPerTick);
    s.keyDown("ArrowDown");
    expect(s.tickMessage().pitch_deg).toBe(0);
  });

  it("ignores unmapped keys", () => {
    const s = new SteeringInput();
    expect(s.keyDown("KeyZ")).toBe(false);
    expect(s.active).toBe(false);
  });

  it("clear releases everything", () => {
    const s = new SteeringInput();
    s.keyDown("KeyW");
    s.keyDown("ArrowLeft");
    s.clear();
    expect(s.tickMessage()).toEqual({
      type: "steer", pitch_deg: 0, yaw_deg: 0, roll_deg: 0, insert_mm: 0,
    });
  });
});
