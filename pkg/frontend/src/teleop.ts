/**
 * Teleoperation keys: the nine-key map from keyboard to velocity command,
 * and the mode gate that decides when a key press may leave the console.
 *
 * Key presses translate to human_command messages only while the twin is in
 * retraining mode; in deploy and halted modes the operator has no control
 * authority, so the console drops the press instead of sending it.
 */

import { encodeHumanCommand } from "./protocol.js";
import type { Mode } from "./state.js";

/** key -> [linear velocity m/s, angular velocity rad/s] */
export const TELEOP_TABLE: Readonly<Record<string, readonly [number, number]>> = {
  w: [0.5, 0.5], // forward-right
  z: [-0.5, 0.5], // backward-right
  a: [0.5, -0.5], // forward-left
  d: [-0.5, -0.5], // backward-left
  l: [0.0, -0.5], // left
  r: [0.0, 0.5], // right
  f: [0.5, 0.0], // forward
  b: [-0.5, 0.0], // backward
  s: [0.0, 0.0], // stop: releases human control
};

export const TELEOP_KEYS = Object.keys(TELEOP_TABLE);

export function isTeleopKey(key: string): boolean {
  return Object.prototype.hasOwnProperty.call(TELEOP_TABLE, key);
}

/** Only a retraining window accepts operator input. */
export function teleopAllowed(mode: Mode): boolean {
  return mode === "retraining";
}

/**
 * One key press -> one wire line, or null when the press must not be sent
 * (unknown key, or the twin is not retraining).
 */
export function teleopLine(
  mode: Mode,
  key: string,
  tick: number,
  src = "console",
): string | null {
  if (!teleopAllowed(mode) || !isTeleopKey(key)) return null;
  const [v, w] = TELEOP_TABLE[key]!;
  return encodeHumanCommand({ src, tick, key, v, w });
}
