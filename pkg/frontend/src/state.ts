/**
 * Console state: a reducer over decoded wire messages.
 *
 * The console never infers beyond the protocol. Mode follows the control
 * messages (halt_control, retrain_begin, retrain_end); the physical pose
 * follows state_sync from the physical side; the virtual pose follows
 * state_sync from the twin side (the retraining progress feed), falling
 * back to the mirrored physical pose outside a window. The sparkline buffer
 * holds the minimum lidar range per tick, the one scalar the operator most
 * needs to watch against the 1.0 m gate.
 */

import type { ObstacleEstimate, TwinMessage } from "./protocol.js";

export type Mode = "deploy" | "halted" | "retraining";
export type Connection = "connected" | "reconnecting" | "lost";

export interface ConsoleState {
  connection: Connection;
  mode: Mode;
  tick: number;
  physicalPose: [number, number, number] | null;
  virtualPose: [number, number, number] | null;
  ranges: number[];
  obstacles: ObstacleEstimate[];
  minRangeHistory: number[];
  lastHaltCause: string | null;
  lastCheckpointId: string | null;
  activeKey: string | null;
  commandCount: number;
  haltCount: number;
}

export const SPARKLINE_CAPACITY = 240;

export function initialState(): ConsoleState {
  return {
    connection: "reconnecting",
    mode: "deploy",
    tick: 0,
    physicalPose: null,
    virtualPose: null,
    ranges: [],
    obstacles: [],
    minRangeHistory: [],
    lastHaltCause: null,
    lastCheckpointId: null,
    activeKey: null,
    commandCount: 0,
    haltCount: 0,
  };
}

function pushSparkline(history: number[], value: number): number[] {
  const next = history.concat(value);
  return next.length > SPARKLINE_CAPACITY ? next.slice(next.length - SPARKLINE_CAPACITY) : next;
}

/** Fold one decoded message into the state; returns a new state object. */
export function reduce(state: ConsoleState, msg: TwinMessage): ConsoleState {
  const next: ConsoleState = { ...state, tick: Math.max(state.tick, msg.tick) };
  switch (msg.type) {
    case "sensor_frame":
      next.ranges = msg.ranges;
      if (msg.ranges.length > 0) {
        next.minRangeHistory = pushSparkline(state.minRangeHistory, Math.min(...msg.ranges));
      }
      return next;
    case "obstacle_report":
      next.obstacles = msg.obstacles;
      return next;
    case "state_sync":
      if (msg.src === "physical") {
        next.physicalPose = msg.pose;
        if (state.mode !== "retraining") next.virtualPose = msg.pose;
      } else {
        next.virtualPose = msg.pose;
      }
      return next;
    case "action_command":
      next.commandCount = state.commandCount + 1;
      return next;
    case "halt_control":
      next.mode = "halted";
      next.lastHaltCause = msg.cause;
      next.haltCount = state.haltCount + 1;
      return next;
    case "retrain_begin":
      next.mode = "retraining";
      return next;
    case "retrain_end":
      next.mode = "deploy";
      next.lastCheckpointId = msg.checkpoint_id;
      next.activeKey = null;
      return next;
    case "human_command":
      next.activeKey = msg.key;
      return next;
  }
}

export function setConnection(state: ConsoleState, connection: Connection): ConsoleState {
  return { ...state, connection };
}

export function setActiveKey(state: ConsoleState, key: string | null): ConsoleState {
  return { ...state, activeKey: key };
}
