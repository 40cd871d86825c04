"""Regenerate the operator-console golden fixtures from the wire codec.

The console is developed against captured wire bytes, never against package
internals. This script rebuilds those captures deterministically:

- teleop_keys.ndjson: canonical encoding of every teleop key press
- session_transcript.ndjson: a gated approach on the trap arena, one halt,
  a retraining window, and a post-resume retreat
- world_desk.json / world_trap.json: arena files for rendering tests
- meta.json: thresholds and limits the console must agree on

Run from the repository root: python scripts/make_ui_fixtures.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from twinnav.hitl import TELEOP_TABLE
from twinnav.protocol import HumanCommand, encode, save_transcript
from twinnav.scenarios import approach_policy, retreat_policy, trap_world, desk_world
from twinnav.twin import (
    PhysicalProxy,
    TwinParams,
    TwinSession,
    VirtualMirror,
    assert_transcript_safety,
)
from twinnav.world import SimParams, save_world

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "frontend", "fixtures")
RETREAT_TICKS = 6


def write_teleop_keys(path: str) -> int:
    with open(path, "wb") as fh:
        for tick, (key, (v, w)) in enumerate(TELEOP_TABLE.items()):
            fh.write(encode(HumanCommand("console", tick, key, v, w)))
    return len(TELEOP_TABLE)


def capture_session(path: str) -> list:
    """One halt/retrain/resume cycle on the trap arena, scripted policies."""
    params = SimParams()
    twin_params = TwinParams()
    world = trap_world()
    physical = PhysicalProxy(world, params, twin_params, spawn_seed=0)
    mirror = VirtualMirror(world, params, twin_params)
    session = TwinSession(physical, mirror)

    first = session.run(approach_policy, max_ticks=200)
    if session.mode != "halted" or not first.halts:
        raise SystemExit("fixture session never tripped the gate")
    halt_tick = first.halts[-1][0]
    session.controller.begin_retraining(halt_tick, f"snap-{halt_tick}")
    session.complete_retraining(halt_tick, "ckpt-fixture")
    session.run(retreat_policy, max_ticks=halt_tick + 1 + RETREAT_TICKS)

    transcript = session.transcript
    assert_transcript_safety(transcript, twin_params.risk_threshold)
    save_transcript(path, transcript)
    return transcript


def main() -> int:
    os.makedirs(OUT_DIR, exist_ok=True)
    params = SimParams()
    twin_params = TwinParams()

    n_keys = write_teleop_keys(os.path.join(OUT_DIR, "teleop_keys.ndjson"))
    transcript = capture_session(os.path.join(OUT_DIR, "session_transcript.ndjson"))
    save_world(desk_world(), os.path.join(OUT_DIR, "world_desk.json"))
    save_world(trap_world(), os.path.join(OUT_DIR, "world_trap.json"))

    meta = {
        "ver": 1,
        "risk_threshold": twin_params.risk_threshold,
        "proximity_threshold": twin_params.proximity_threshold,
        "v_max": params.v_max,
        "w_max": params.w_max,
        "n_beams": params.n_beams,
        "fov": params.fov,
        "max_range": params.max_range,
        "dt": params.dt,
    }
    with open(os.path.join(OUT_DIR, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    kinds = {}
    for msg in transcript:
        kinds[type(msg).__name__] = kinds.get(type(msg).__name__, 0) + 1
    flags = [ob.proximity_flag
             for msg in transcript if type(msg).__name__ == "ObstacleReport"
             for ob in msg.obstacles]
    print(f"teleop keys: {n_keys}")
    print(f"session messages: {len(transcript)} "
          f"({', '.join(f'{k} x{v}' for k, v in sorted(kinds.items()))})")
    print(f"obstacle flags: near x{flags.count('near')}, far x{flags.count('far')}")
    if "near" not in flags or "far" not in flags:
        raise SystemExit("fixture transcript must cover both proximity flags")
    assert math.isclose(meta["proximity_threshold"], 1.5)
    return 0


if __name__ == "__main__":
    sys.exit(main())
