/**
 * State reducer: the mode banner must follow the control messages of a real
 * session, poses must track the right sender, and the sparkline buffer must
 * stay bounded.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { decodeLine } from "../src/protocol.js";
import {
  SPARKLINE_CAPACITY,
  initialState,
  reduce,
  setConnection,
  type ConsoleState,
} from "../src/state.js";

const FIXTURES = join(__dirname, "..", "fixtures");

function sessionMessages() {
  return readFileSync(join(FIXTURES, "session_transcript.ndjson"), "utf-8")
    .split("\n")
    .filter((line) => line.length > 0)
    .map(decodeLine);
}

describe("mode tracking", () => {
  it("walks deploy -> halted -> retraining -> deploy on the golden session", () => {
    let state = initialState();
    const modes: string[] = [state.mode];
    for (const msg of sessionMessages()) {
      state = reduce(state, msg);
      if (modes[modes.length - 1] !== state.mode) modes.push(state.mode);
    }
    expect(modes).toEqual(["deploy", "halted", "retraining", "deploy"]);
    expect(state.lastHaltCause).toBe("predicted-proximity");
    expect(state.lastCheckpointId).toBe("ckpt-fixture");
  });

  it("counts commands and halts", () => {
    let state = initialState();
    for (const msg of sessionMessages()) state = reduce(state, msg);
    expect(state.haltCount).toBe(1);
    expect(state.commandCount).toBeGreaterThan(2);
  });
});

describe("pose tracking", () => {
  it("mirrors the physical pose outside retraining", () => {
    let state = initialState();
    state = reduce(state, decodeLine('{"ver":1,"type":"state_sync","src":"physical","tick":0,"pose":[1.0,2.0,0.5]}'));
    expect(state.physicalPose).toEqual([1.0, 2.0, 0.5]);
    expect(state.virtualPose).toEqual([1.0, 2.0, 0.5]);
  });

  it("lets the twin progress feed drive the virtual pose during retraining", () => {
    let state = initialState();
    state = reduce(state, decodeLine('{"ver":1,"type":"halt_control","src":"twin","tick":3,"cause":"proximity"}'));
    state = reduce(state, decodeLine('{"ver":1,"type":"retrain_begin","src":"twin","tick":3,"snapshot_id":"snap-3"}'));
    expect(state.mode).toBe("retraining");
    state = reduce(state, decodeLine('{"ver":1,"type":"state_sync","src":"twin","tick":3,"pose":[4.0,4.0,1.0]}'));
    state = reduce(state, decodeLine('{"ver":1,"type":"state_sync","src":"physical","tick":3,"pose":[2.0,2.0,0.0]}'));
    expect(state.virtualPose).toEqual([4.0, 4.0, 1.0]);
    expect(state.physicalPose).toEqual([2.0, 2.0, 0.0]);
  });
});

describe("sparkline buffer", () => {
  it("tracks the minimum range and stays bounded", () => {
    let state: ConsoleState = initialState();
    for (let tick = 0; tick < SPARKLINE_CAPACITY + 40; tick += 1) {
      const line = `{"ver":1,"type":"sensor_frame","src":"physical","tick":${tick},"ranges":[5.0,${(
        1 + tick * 0.01
      ).toFixed(2)},9.0],"pose":[1.0,1.0,0.0]}`;
      state = reduce(state, decodeLine(line));
    }
    expect(state.minRangeHistory.length).toBe(SPARKLINE_CAPACITY);
    expect(Math.min(...state.minRangeHistory)).toBeGreaterThan(0);
  });
});

describe("connection status", () => {
  it("is explicit state, not inferred", () => {
    let state = initialState();
    expect(state.connection).toBe("reconnecting");
    state = setConnection(state, "connected");
    expect(state.connection).toBe("connected");
    state = setConnection(state, "lost");
    expect(state.connection).toBe("lost");
  });
});
