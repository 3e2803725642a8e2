// Keyboard-to-steering mapping. Held keys accumulate into one steering
// message per tick, emitted by the main loop at the fixed tick rate, so an
// input event is always reflected in the very next message.

import { SteerMessage, steerMessage } from "./protocol.js";

export interface SteeringConfig {
  degPerTick: number;
  mmPerTick: number;
}

export const DEFAULT_STEERING: SteeringConfig = { degPerTick: 1.5, mmPerTick: 1.0 };

// key code -> [pitch, yaw, roll, insert] multipliers
const KEY_AXES: Record<string, [number, number, number, number]> = {
  ArrowUp: [-1, 0, 0, 0],
  ArrowDown: [1, 0, 0, 0],
  ArrowLeft: [0, -1, 0, 0],
  ArrowRight: [0, 1, 0, 0],
  KeyQ: [0, 0, -1, 0],
  KeyE: [0, 0, 1, 0],
  KeyW: [0, 0, 0, 1],
  KeyS: [0, 0, 0, -1],
};

export class SteeringInput {
  private pressed = new Set<string>();

  constructor(private config: SteeringConfig = DEFAULT_STEERING) {}

  keyDown(code: string): boolean {
    if (!(code in KEY_AXES)) return false;
    this.pressed.add(code);
    return true;
  }

  keyUp(code: string): void {
    this.pressed.delete(code);
  }

  clear(): void {
    this.pressed.clear();
  }

  get active(): boolean {
    return this.pressed.size > 0;
  }

  tickMessage(): SteerMessage {
    let pitch = 0;
    let yaw = 0;
    let roll = 0;
    let insert = 0;
    for (const code of this.pressed) {
      const [p, y, r, i] = KEY_AXES[code];
      pitch += p;
      yaw += y;
      roll += r;
      insert += i;
    }
    return steerMessage(
      pitch * this.config.degPerTick,
      yaw * this.config.degPerTick,
      roll * this.config.degPerTick,
      insert * this.config.mmPerTick,
    );
  }
}
