"""Twin-layer tests: detection, mirroring, gating, and deployment safety."""

import math

import numpy as np
import pytest

from twinnav.errors import ContractViolation
from twinnav.protocol import (
    ActionCommand,
    HaltControl,
    ObstacleReport,
    RetrainBegin,
    RetrainEnd,
    SensorFrame,
    StateSync,
)
from twinnav.twin import (
    GateDecision,
    LocalLink,
    PhysicalProxy,
    TwinParams,
    TwinSession,
    VirtualMirror,
    assert_transcript_safety,
    detect_obstacles,
    mirror_update,
    risk_gate,
)
from twinnav.world import (
    Observation,
    Obstacle,
    SimParams,
    WorldSpec,
    lidar_scan,
)

PARAMS = SimParams()
TWIN = TwinParams()


def obs_with_min_range(min_range: float, params=PARAMS) -> Observation:
    z = np.full(params.n_beams, 1.0)
    z[3] = min_range / params.max_range
    return Observation(z=z, d=5.0, phi=0.0, a1=0.0, a2=0.0)


class TestRiskGate:
    def test_below_threshold_halts(self):
        decision = risk_gate(obs_with_min_range(0.9), PARAMS, TWIN)
        assert decision.halt and decision.cause == "proximity"
        assert decision.min_range == pytest.approx(0.9)

    def test_above_threshold_deploys(self):
        assert not risk_gate(obs_with_min_range(1.1), PARAMS, TWIN).halt

    def test_exactly_at_threshold_deploys(self):
        # 2.5 / 10.0 normalizes exactly; threshold 2.5 tests the strict bound
        twin = TwinParams(risk_threshold=2.5)
        assert not risk_gate(obs_with_min_range(2.5), PARAMS, twin).halt

    def test_monotone_in_min_range(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b = sorted(rng.uniform(0.2, 2.0, size=2))
            halt_b = risk_gate(obs_with_min_range(b), PARAMS, TWIN).halt
            halt_a = risk_gate(obs_with_min_range(a), PARAMS, TWIN).halt
            if halt_b:
                assert halt_a


class TestDetectObstacles:
    def test_all_max_range_empty(self):
        ranges = np.full(PARAMS.n_beams, PARAMS.max_range)
        assert detect_obstacles(ranges, (5.0, 5.0, 0.0), PARAMS, TWIN) == []

    def test_single_obstacle_near_flag(self):
        # arena walls beyond max range so only the circle returns
        spec = WorldSpec(width=30.0, height=30.0, goal=(25.0, 25.0),
                         obstacles=[Obstacle("circle", 16.2, 15.0, radius=0.2)])
        pose = (15.0, 15.0, 0.0)  # surface about 1.0 m ahead, under 1.5 m
        ranges = lidar_scan(spec, pose, PARAMS)
        estimates = detect_obstacles(ranges, pose, PARAMS, TWIN)
        assert len(estimates) == 1
        assert estimates[0].proximity_flag == "near"

    def test_far_flag_beyond_threshold(self):
        # circle centered on an exact beam direction, 4 m out
        beam = math.pi / 38
        cx, cy = 15.0 + 4.0 * math.cos(beam), 15.0 + 4.0 * math.sin(beam)
        spec = WorldSpec(width=30.0, height=30.0, goal=(25.0, 25.0),
                         obstacles=[Obstacle("circle", cx, cy, radius=0.2)])
        pose = (15.0, 15.0, 0.0)
        ranges = lidar_scan(spec, pose, PARAMS)
        estimates = detect_obstacles(ranges, pose, PARAMS, TWIN)
        assert len(estimates) == 1
        assert estimates[0].proximity_flag == "far"

    def test_three_circles_three_clusters_with_accurate_centroids(self):
        centers = [(24.0, 22.0), (22.0, 25.0), (19.5, 21.0)]
        spec = WorldSpec(width=44.0, height=44.0, goal=(40.0, 40.0),
                         obstacles=[Obstacle("circle", x, y, radius=0.2)
                                    for x, y in centers])
        pose = (22.0, 22.0, math.pi / 2)
        params = SimParams(n_beams=288, fov=2 * math.pi * 0.999, max_range=10.0)
        ranges = lidar_scan(spec, pose, params)
        estimates = detect_obstacles(ranges, pose, params, TWIN)
        assert len(estimates) == 3
        for center in centers:
            best = min(math.dist(center, e.centroid) for e in estimates)
            # every arc point lies within one radius of the true center, so
            # the cluster centroid must as well
            assert best <= 0.2

    def test_contiguous_surface_is_one_cluster(self):
        spec = WorldSpec(width=40.0, height=30.0, goal=(35.0, 15.0),
                         obstacles=[Obstacle("box", 9.0, 15.0, width=1.0, height=2.0)])
        pose = (5.0, 15.0, 0.0)
        params = SimParams(n_beams=90, max_range=10.0)
        ranges = lidar_scan(spec, pose, params)
        estimates = detect_obstacles(ranges, pose, params, TWIN)
        assert len(estimates) == 1

    def test_radius_floor_applied_to_single_return(self):
        ranges = np.full(PARAMS.n_beams, PARAMS.max_range)
        ranges[10] = 3.0
        estimates = detect_obstacles(ranges, (5.0, 5.0, 0.0), PARAMS, TWIN)
        assert len(estimates) == 1
        assert estimates[0].radius == TWIN.min_estimate_radius


def make_report(tick, estimates=(), src="physical"):
    return ObstacleReport(src, tick, tuple(estimates))


def make_sync(tick, pose, src="physical"):
    return StateSync(src, tick, pose)


class TestMirror:
    def _mirror(self):
        base = WorldSpec(width=10.0, height=8.0, goal=(8.0, 4.0))
        return VirtualMirror(base, PARAMS, TWIN)

    def test_starts_empty_and_unsynced(self):
        mirror = self._mirror()
        assert mirror.world.obstacles == []
        assert mirror.pose is None
        with pytest.raises(ContractViolation):
            mirror.observation()

    def test_sync_sets_pose_exactly(self):
        mirror = self._mirror()
        pose = (1.234567890123, 4.5, -0.25)
        mirror_update(mirror, make_report(0), make_sync(0, pose))
        assert mirror.pose == pose

    def test_idempotent_under_repeated_report(self):
        mirror = self._mirror()
        report = make_report(3, [{"centroid": (4.0, 4.0), "radius": 0.3,
                                  "proximity_flag": "near"}])
        sync = make_sync(3, (2.0, 2.0, 0.0))
        mirror_update(mirror, report, sync)
        first = [(ob.x, ob.y, ob.radius) for ob in mirror.world.obstacles]
        mirror_update(mirror, report, sync)
        assert [(ob.x, ob.y, ob.radius) for ob in mirror.world.obstacles] == first
        assert mirror.pose == (2.0, 2.0, 0.0)

    def test_stale_tick_dropped_and_counted(self):
        mirror = self._mirror()
        mirror_update(mirror, make_report(5), make_sync(5, (1.0, 1.0, 0.0)))
        ok = mirror_update(mirror, make_report(4), make_sync(4, (9.0, 9.0, 0.0)))
        assert not ok
        assert mirror.pose == (1.0, 1.0, 0.0)
        assert mirror.dropped_stale == 1
        assert mirror.last_synced_tick == 5

    def test_wall_hugging_estimates_skipped(self):
        mirror = self._mirror()
        report = make_report(0, [
            {"centroid": (0.1, 4.0), "radius": 0.3, "proximity_flag": "near"},
            {"centroid": (5.0, 4.0), "radius": 0.3, "proximity_flag": "near"},
        ])
        mirror_update(mirror, report, make_sync(0, (2.0, 4.0, 0.0)))
        assert len(mirror.world.obstacles) == 1
        assert mirror.world.obstacles[0].x == 5.0

    def test_obstacle_set_replaced_not_merged(self):
        mirror = self._mirror()
        mirror_update(mirror, make_report(0, [{"centroid": (4.0, 4.0), "radius": 0.3,
                                               "proximity_flag": "near"}]),
                      make_sync(0, (2.0, 2.0, 0.0)))
        mirror_update(mirror, make_report(1, [{"centroid": (6.0, 6.0), "radius": 0.4,
                                               "proximity_flag": "far"}]),
                      make_sync(1, (2.0, 2.0, 0.0)))
        assert len(mirror.world.obstacles) == 1
        assert mirror.world.obstacles[0].x == 6.0


class TestLookahead:
    def _mirror_with_wall(self):
        base = WorldSpec(width=20.0, height=15.0, goal=(17.0, 7.5))
        mirror = VirtualMirror(base, PARAMS, TWIN)
        report = make_report(0, [{"centroid": (9.0, 7.5), "radius": 0.5,
                                  "proximity_flag": "near"}])
        mirror_update(mirror, report, make_sync(0, (7.45, 7.5, 0.0)))
        return mirror

    def test_command_into_obstacle_suppressed(self):
        mirror = self._mirror_with_wall()
        # surface 1.05 m ahead; stepping forward 0.1 m predicts 0.95 < 1.0
        assert not mirror.lookahead_safe((1.0, 0.0))

    def test_command_away_is_safe(self):
        mirror = self._mirror_with_wall()
        assert mirror.lookahead_safe((-1.0, 0.0))

    def test_unsynced_mirror_never_safe(self):
        base = WorldSpec(width=10.0, height=8.0, goal=(8.0, 4.0))
        mirror = VirtualMirror(base, PARAMS, TWIN)
        assert not mirror.lookahead_safe((0.0, 0.0))


def corridor_world(face_x=8.05):
    # box face toward the robot at x = face_x, spanning the corridor height
    width = 2.0
    return WorldSpec(width=20.0, height=15.0, goal=(17.0, 7.5),
                     start=(3.0, 7.5, 0.0),
                     obstacles=[Obstacle("box", face_x + width / 2, 7.5,
                                         width=width, height=6.0)])


def open_world():
    return WorldSpec(width=20.0, height=15.0, goal=(6.0, 7.5), start=(3.0, 7.5, 0.0))


def forward_policy(_obs):
    return (1.0, 0.0)


def make_session(spec, drop_rate=0.0, seed=0, twin_params=TWIN):
    physical = PhysicalProxy(spec, PARAMS, twin_params, spawn_seed=0)
    mirror = VirtualMirror(spec, PARAMS, twin_params)
    link = LocalLink(drop_rate=drop_rate, seed=seed)
    return TwinSession(physical, mirror, link)


class TestDeployLoop:
    def test_scripted_approach_halts_before_breach(self):
        session = make_session(corridor_world())
        result = session.run(forward_policy, max_ticks=200)
        assert session.mode == "halted"
        assert result.halts and result.halts[0][1] == "predicted-proximity"
        assert_transcript_safety(session.transcript, TWIN.risk_threshold)
        # every sensor frame in the transcript stayed at or above the gate
        for msg in session.transcript:
            if isinstance(msg, SensorFrame):
                assert min(msg.ranges) >= TWIN.risk_threshold

    def test_zero_commands_after_breach_without_lookahead(self):
        twin_params = TwinParams(lookahead=False)
        session = make_session(corridor_world(face_x=8.0), twin_params=twin_params)
        result = session.run(forward_policy, max_ticks=200)
        assert session.mode == "halted"
        assert result.halts[0][1] == "proximity"
        assert_transcript_safety(session.transcript, twin_params.risk_threshold)

    def test_open_world_no_halt_messages(self):
        session = make_session(open_world())
        result = session.run(forward_policy, max_ticks=100)
        assert result.done_reason == "goal"
        assert result.halts == []
        assert not any(isinstance(m, HaltControl) for m in session.transcript)

    def test_lossless_link_mirror_pose_tracks_exactly(self):
        session = make_session(open_world())
        result = session.run(forward_policy, max_ticks=50)
        for record in result.trace:
            assert record.mirror_pose == record.physical_pose

    def test_commands_only_in_deploy_mode(self):
        session = make_session(corridor_world())
        session.run(forward_policy, max_ticks=200)
        halted_at = next(m.tick for m in session.transcript
                         if isinstance(m, HaltControl))
        for msg in session.transcript:
            if isinstance(msg, ActionCommand):
                assert msg.tick < halted_at


class TestRetrainFlow:
    def test_halt_invokes_hook_and_resumes(self):
        calls = []

        def hook(session, cause):
            calls.append(cause)
            return "ckpt-7"

        session = make_session(corridor_world())

        # retrained behaviour: back away once resumed, which the lookahead
        # always permits because it strictly increases the minimum range
        def policy(obs):
            return (1.0, 0.0) if not calls else (-1.0, 0.0)

        result = session.run(policy, max_ticks=60, retrain_hook=hook)
        assert calls == ["predicted-proximity"]
        begins = [m for m in session.transcript if isinstance(m, RetrainBegin)]
        ends = [m for m in session.transcript if isinstance(m, RetrainEnd)]
        assert len(begins) == 1 and len(ends) == 1
        assert ends[0].checkpoint_id == "ckpt-7"
        assert session.mode in ("deploy", "halted")
        assert result.resume_poses == result.halt_poses  # pose held during retrain
        assert_transcript_safety(session.transcript, TWIN.risk_threshold)

    def test_without_hook_session_stays_halted(self):
        session = make_session(corridor_world())
        result = session.run(forward_policy, max_ticks=200)
        assert session.mode == "halted"
        assert result.mode == "halted"
        assert not any(isinstance(m, RetrainBegin) for m in session.transcript)


class TestDropInjection:
    def test_staleness_bounded_by_longest_burst(self):
        session = make_session(open_world(), drop_rate=0.05, seed=3)
        result = session.run(lambda obs: (0.2, 0.1), max_ticks=200)
        lag = 0
        max_lag = 0
        for record in result.trace:
            if record.mirror_pose == record.physical_pose:
                lag = 0
            else:
                lag += 1
                max_lag = max(max_lag, lag)
        # with 5% drops, bursts beyond a handful of ticks are untenable
        assert session.link.dropped > 0
        assert max_lag <= 10

    def test_lossless_link_drops_nothing(self):
        link = LocalLink(drop_rate=0.0)
        for _ in range(100):
            assert link.transmit("x") == "x"
        assert link.dropped == 0

    def test_bad_drop_rate_rejected(self):
        with pytest.raises(ContractViolation):
            LocalLink(drop_rate=1.0)


class TestTranscriptSafetyHelper:
    def test_violating_transcript_raises(self):
        transcript = [
            SensorFrame("p", 0, (0.5,), (1.0, 1.0, 0.0)),
            ActionCommand("t", 0, 1.0, 0.0),
        ]
        with pytest.raises(ContractViolation):
            assert_transcript_safety(transcript, 1.0)

    def test_retrain_end_clears_breach(self):
        transcript = [
            SensorFrame("p", 0, (0.5,), (1.0, 1.0, 0.0)),
            HaltControl("t", 0, "proximity"),
            RetrainBegin("t", 0, "snap-0"),
            RetrainEnd("t", 0, "ckpt-1"),
            ActionCommand("t", 1, 1.0, 0.0),
        ]
        assert_transcript_safety(transcript, 1.0)
