/**
 * Wire codec for the twin protocol: newline-delimited JSON, one message per
 * line, every message carrying ver/type/src/tick. Decoding is strict in the
 * same way the twin side is strict: unknown types, unknown fields, missing
 * fields, and bad ticks all throw instead of passing through half-parsed.
 *
 * Encoding is only needed for messages the console originates
 * (human_command), and is canonical: keys sorted, compact separators, and
 * float-typed fields always written with a decimal point so the bytes match
 * the twin's own encoder and captured fixtures exactly.
 */

export const PROTOCOL_VERSION = 1;

export type ProximityFlag = "near" | "far";

export interface ObstacleEstimate {
  centroid: [number, number];
  radius: number;
  proximity: ProximityFlag;
}

export interface SensorFrame {
  type: "sensor_frame";
  src: string;
  tick: number;
  ranges: number[];
  pose: [number, number, number];
}

export interface ObstacleReport {
  type: "obstacle_report";
  src: string;
  tick: number;
  obstacles: ObstacleEstimate[];
}

export interface ActionCommand {
  type: "action_command";
  src: string;
  tick: number;
  v: number;
  w: number;
}

export interface HaltControl {
  type: "halt_control";
  src: string;
  tick: number;
  cause: string;
}

export interface RetrainBegin {
  type: "retrain_begin";
  src: string;
  tick: number;
  snapshot_id: string;
}

export interface RetrainEnd {
  type: "retrain_end";
  src: string;
  tick: number;
  checkpoint_id: string;
}

export interface HumanCommand {
  type: "human_command";
  src: string;
  tick: number;
  key: string;
  v: number;
  w: number;
}

export interface StateSync {
  type: "state_sync";
  src: string;
  tick: number;
  pose: [number, number, number];
}

export type TwinMessage =
  | SensorFrame
  | ObstacleReport
  | ActionCommand
  | HaltControl
  | RetrainBegin
  | RetrainEnd
  | HumanCommand
  | StateSync;

export class DecodeError extends Error {}
export class VersionError extends DecodeError {}

const VARIANT_FIELDS: Record<TwinMessage["type"], string[]> = {
  sensor_frame: ["ranges", "pose"],
  obstacle_report: ["obstacles"],
  action_command: ["v", "w"],
  halt_control: ["cause"],
  retrain_begin: ["snapshot_id"],
  retrain_end: ["checkpoint_id"],
  human_command: ["key", "v", "w"],
  state_sync: ["pose"],
};

function fail(reason: string): never {
  throw new DecodeError(reason);
}

function checkTick(value: unknown): number {
  if (typeof value !== "number" || !Number.isInteger(value) || value < 0) {
    fail(`tick must be a non-negative integer, got ${JSON.stringify(value)}`);
  }
  return value;
}

function checkStr(value: unknown, name: string): string {
  if (typeof value !== "string" || value.length === 0) {
    fail(`${name} must be a non-empty string, got ${JSON.stringify(value)}`);
  }
  return value;
}

function checkNum(value: unknown, name: string): number {
  if (typeof value !== "number" || !Number.isFinite(value)) {
    fail(`${name} must be a finite number, got ${JSON.stringify(value)}`);
  }
  return value;
}

function checkPose(value: unknown): [number, number, number] {
  if (!Array.isArray(value) || value.length !== 3) {
    fail("pose must be (x, y, heading)");
  }
  const [x, y, h] = value as unknown[];
  return [checkNum(x, "pose.x"), checkNum(y, "pose.y"), checkNum(h, "pose.heading")];
}

function checkObstacle(value: unknown): ObstacleEstimate {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    fail("malformed obstacle estimate");
  }
  const entry = value as Record<string, unknown>;
  const keys = Object.keys(entry).sort();
  if (keys.join(",") !== "centroid,proximity,radius") {
    fail("malformed obstacle estimate");
  }
  const centroid = entry.centroid;
  if (!Array.isArray(centroid) || centroid.length !== 2) {
    fail("obstacle centroid must be a 2D point");
  }
  const radius = checkNum(entry.radius, "radius");
  if (radius <= 0) fail("obstacle estimate radius must be positive");
  const proximity = entry.proximity;
  if (proximity !== "near" && proximity !== "far") {
    fail(`proximity flag must be near or far, got ${JSON.stringify(proximity)}`);
  }
  return {
    centroid: [checkNum(centroid[0], "centroid.x"), checkNum(centroid[1], "centroid.y")],
    radius,
    proximity,
  };
}

/** Decode one wire line; throws DecodeError / VersionError on any defect. */
export function decodeLine(line: string): TwinMessage {
  let data: unknown;
  try {
    data = JSON.parse(line);
  } catch (exc) {
    fail(`malformed frame: ${(exc as Error).message}`);
  }
  if (typeof data !== "object" || data === null || Array.isArray(data)) {
    fail("frame is not an object");
  }
  const obj = data as Record<string, unknown>;
  if (!("ver" in obj)) fail("missing protocol version field 'ver'");
  if (obj.ver !== PROTOCOL_VERSION) {
    throw new VersionError(
      `unsupported protocol version ${JSON.stringify(obj.ver)}, supported ${PROTOCOL_VERSION}`,
    );
  }
  const tag = obj.type;
  if (typeof tag !== "string" || !(tag in VARIANT_FIELDS)) {
    fail(`unknown message type ${JSON.stringify(tag)}`);
  }
  const variant = tag as TwinMessage["type"];
  const expected = new Set(["src", "tick", ...VARIANT_FIELDS[variant]]);
  const payload = Object.keys(obj).filter((k) => k !== "ver" && k !== "type");
  const unknown = payload.filter((k) => !expected.has(k)).sort();
  if (unknown.length > 0) fail(`unknown fields for ${variant}: ${unknown.join(", ")}`);
  const missing = [...expected].filter((k) => !(k in obj)).sort();
  if (missing.length > 0) fail(`missing fields for ${variant}: ${missing.join(", ")}`);

  const src = checkStr(obj.src, "src");
  const tick = checkTick(obj.tick);
  switch (variant) {
    case "sensor_frame": {
      const ranges = obj.ranges;
      if (!Array.isArray(ranges)) fail("ranges must be an array");
      return {
        type: variant,
        src,
        tick,
        ranges: ranges.map((r, i) => checkNum(r, `ranges[${i}]`)),
        pose: checkPose(obj.pose),
      };
    }
    case "obstacle_report": {
      const obstacles = obj.obstacles;
      if (!Array.isArray(obstacles)) fail("obstacles must be an array");
      return { type: variant, src, tick, obstacles: obstacles.map(checkObstacle) };
    }
    case "action_command":
      return { type: variant, src, tick, v: checkNum(obj.v, "v"), w: checkNum(obj.w, "w") };
    case "halt_control":
      return { type: variant, src, tick, cause: checkStr(obj.cause, "cause") };
    case "retrain_begin":
      return { type: variant, src, tick, snapshot_id: checkStr(obj.snapshot_id, "snapshot_id") };
    case "retrain_end":
      return { type: variant, src, tick, checkpoint_id: checkStr(obj.checkpoint_id, "checkpoint_id") };
    case "human_command":
      return {
        type: variant,
        src,
        tick,
        key: checkStr(obj.key, "key"),
        v: checkNum(obj.v, "v"),
        w: checkNum(obj.w, "w"),
      };
    case "state_sync":
      return { type: variant, src, tick, pose: checkPose(obj.pose) };
  }
}

/**
 * Format a float-typed field the way the twin's encoder does: shortest
 * round-trip decimal, but never bare-integer (0 encodes as "0.0"), so the
 * same value always produces the same bytes on both sides of the wire.
 */
export function formatFloat(x: number): string {
  if (!Number.isFinite(x)) throw new DecodeError("cannot encode non-finite float");
  if (Object.is(x, -0)) return "-0.0";
  const text = String(x);
  if (!text.includes(".") && !text.includes("e") && !text.includes("E")) {
    return `${text}.0`;
  }
  return text;
}

/**
 * Canonical encoding of a console-originated message: keys sorted, compact
 * separators, ver stamped. Only human_command is console-originated; v and w
 * are float-typed fields and go through formatFloat, tick and ver are ints.
 */
export function encodeHumanCommand(msg: Omit<HumanCommand, "type">): string {
  const entries: Record<string, string> = {
    key: JSON.stringify(msg.key),
    src: JSON.stringify(checkStr(msg.src, "src")),
    tick: String(checkTick(msg.tick)),
    type: JSON.stringify("human_command"),
    v: formatFloat(msg.v),
    ver: String(PROTOCOL_VERSION),
    w: formatFloat(msg.w),
  };
  const body = Object.keys(entries)
    .sort()
    .map((k) => `${JSON.stringify(k)}:${entries[k]}`)
    .join(",");
  return `{${body}}`;
}
