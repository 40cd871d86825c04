"""2D navigation arena: kinematics, raycast lidar, spawn rules, reward.

The arena is an axis-aligned rectangle with the origin at the lower-left
corner. Obstacles are circles or oriented boxes; the enclosing walls count as
obstacles for collision and lidar purposes. All dynamics are deterministic so
two instances stepping the same action sequence stay bit-identical, which is
what the twin mirror relies on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolation, SpawnFailure

DONE_REASONS = ("goal", "collision", "timeout", "none")


@dataclass
class SimParams:
    """Physics, sensing, and reward constants (all lengths in meters)."""

    dt: float = 0.1
    max_steps: int = 500
    v_max: float = 1.0
    w_max: float = 1.0
    collision_clearance: float = 0.7
    goal_radius: float = 0.5
    n_beams: int = 20
    fov: float = math.pi
    max_range: float = 10.0
    goal_reward: float = 100.0
    collision_reward: float = -100.0
    progress_gain: float = 2.0
    step_cost: float = 0.01
    spin_penalty: float = 0.05

    @property
    def state_dim(self) -> int:
        return self.n_beams + 4


@dataclass
class Obstacle:
    shape: str  # "circle" or "box"
    x: float
    y: float
    radius: float = 0.0  # circles
    width: float = 0.0  # boxes
    height: float = 0.0
    heading: float = 0.0  # box orientation
    movable: bool = False  # re-placed randomly at each episode spawn
    waypoints: list | None = None  # scripted patrol path, world coordinates
    speed: float = 0.3  # patrol speed in m/s
    wp_index: int = 0

    def __post_init__(self):
        if self.shape not in ("circle", "box"):
            raise ContractViolation(f"unknown obstacle shape {self.shape!r}")
        if self.shape == "circle" and self.radius <= 0:
            raise ContractViolation("circle obstacles need a positive radius")
        if self.shape == "box" and (self.width <= 0 or self.height <= 0):
            raise ContractViolation("box obstacles need positive width and height")

    def bounding_radius(self) -> float:
        if self.shape == "circle":
            return self.radius
        return 0.5 * math.hypot(self.width, self.height)

    def signed_distance(self, px: float, py: float) -> float:
        """Distance from a point to the obstacle surface, negative inside."""
        if self.shape == "circle":
            return math.hypot(px - self.x, py - self.y) - self.radius
        c, s = math.cos(self.heading), math.sin(self.heading)
        rx, ry = px - self.x, py - self.y
        lx = c * rx + s * ry
        ly = -s * rx + c * ry
        dx = abs(lx) - 0.5 * self.width
        dy = abs(ly) - 0.5 * self.height
        outside = math.hypot(max(dx, 0.0), max(dy, 0.0))
        inside = min(max(dx, dy), 0.0)
        return outside + inside

    def ray_hit(self, px: float, py: float, ux: float, uy: float) -> float | None:
        """Distance along a unit ray to the first surface hit, None if missed."""
        if self.shape == "circle":
            ox, oy = px - self.x, py - self.y
            c = ox * ox + oy * oy - self.radius * self.radius
            if c <= 0.0:
                return 0.0  # ray starts inside
            b = ox * ux + oy * uy
            disc = b * b - c
            if disc < 0.0:
                return None
            t = -b - math.sqrt(disc)
            return t if t >= 0.0 else None
        co, si = math.cos(self.heading), math.sin(self.heading)
        rx, ry = px - self.x, py - self.y
        lpx = co * rx + si * ry
        lpy = -si * rx + co * ry
        lux = co * ux + si * uy
        luy = -si * ux + co * uy
        tmin, tmax = 0.0, math.inf
        for p, u, half in ((lpx, lux, 0.5 * self.width), (lpy, luy, 0.5 * self.height)):
            if abs(u) < 1e-15:
                if abs(p) > half:
                    return None
            else:
                t1 = (-half - p) / u
                t2 = (half - p) / u
                if t1 > t2:
                    t1, t2 = t2, t1
                tmin = max(tmin, t1)
                tmax = min(tmax, t2)
                if tmin > tmax:
                    return None
        return tmin


@dataclass
class WorldSpec:
    width: float = 20.0
    height: float = 15.0
    goal: tuple = (17.0, 7.5)
    obstacles: list = field(default_factory=list)
    start: tuple | None = None  # fixed (x, y, heading); None samples at spawn
    seed: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ContractViolation("arena bounds must be positive")
        gx, gy = self.goal
        if not (0.0 < gx < self.width and 0.0 < gy < self.height):
            raise ContractViolation("goal must lie strictly inside the arena")
        for ob in self.obstacles:
            if not self._inside(ob):
                raise ContractViolation(f"obstacle at ({ob.x}, {ob.y}) extends outside bounds")

    def _inside(self, ob: Obstacle) -> bool:
        r = ob.bounding_radius()
        return r <= ob.x <= self.width - r and r <= ob.y <= self.height - r


@dataclass
class RobotState:
    x: float
    y: float
    heading: float
    v: float = 0.0
    w: float = 0.0
    elapsed_steps: int = 0

    @property
    def pose(self) -> tuple:
        return (self.x, self.y, self.heading)


@dataclass
class Observation:
    z: np.ndarray  # lidar ranges normalized to [0, 1]
    d: float  # distance to goal, meters
    phi: float  # goal bearing relative to heading, wrapped to (-pi, pi]
    a1: float  # previous action, linear component
    a2: float  # previous action, angular component

    def vector(self) -> np.ndarray:
        return np.concatenate([self.z, [self.d, self.phi, self.a1, self.a2]])


@dataclass
class StepOutcome:
    observation: Observation
    reward: float
    done: bool
    done_reason: str

    def __post_init__(self):
        if self.done_reason not in DONE_REASONS:
            raise ContractViolation(f"unknown done_reason {self.done_reason!r}")
        if self.done != (self.done_reason != "none"):
            raise ContractViolation("done flag must match done_reason")


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]."""
    y = math.fmod(x + math.pi, 2.0 * math.pi)
    if y <= 0.0:
        y += 2.0 * math.pi
    return y - math.pi


def copy_world(spec: WorldSpec) -> WorldSpec:
    obstacles = [replace(ob, waypoints=list(ob.waypoints) if ob.waypoints else None)
                 for ob in spec.obstacles]
    return replace(spec, obstacles=obstacles)


def wall_clearance(spec: WorldSpec, px: float, py: float) -> float:
    return min(px, spec.width - px, py, spec.height - py)


def min_clearance(spec: WorldSpec, px: float, py: float) -> float:
    """Smallest signed distance to any wall or obstacle surface."""
    best = wall_clearance(spec, px, py)
    for ob in spec.obstacles:
        best = min(best, ob.signed_distance(px, py))
    return best


def goal_distance(spec: WorldSpec, px: float, py: float) -> float:
    return math.hypot(px - spec.goal[0], py - spec.goal[1])


def ray_distance(spec: WorldSpec, px: float, py: float, angle: float) -> float:
    """Distance to the first wall or obstacle along a ray, uncapped."""
    ux, uy = math.cos(angle), math.sin(angle)
    best = math.inf
    if ux > 1e-15:
        best = min(best, (spec.width - px) / ux)
    elif ux < -1e-15:
        best = min(best, -px / ux)
    if uy > 1e-15:
        best = min(best, (spec.height - py) / uy)
    elif uy < -1e-15:
        best = min(best, -py / uy)
    for ob in spec.obstacles:
        t = ob.ray_hit(px, py, ux, uy)
        if t is not None and t < best:
            best = t
    return max(best, 0.0)


def lidar_scan(spec: WorldSpec, pose: tuple, params: SimParams) -> np.ndarray:
    """Raw beam ranges in meters, capped at max range.

    Beams are evenly spaced across the field of view, endpoints inclusive,
    ordered from the rightmost offset (-fov/2) to the leftmost (+fov/2).
    """
    px, py, heading = pose
    if params.n_beams == 1:
        offsets = np.array([0.0])
    else:
        offsets = np.linspace(-0.5 * params.fov, 0.5 * params.fov, params.n_beams)
    out = np.empty(params.n_beams)
    for i, off in enumerate(offsets):
        out[i] = min(ray_distance(spec, px, py, heading + off), params.max_range)
    return out


def build_observation(spec: WorldSpec, robot: RobotState, prev_action,
                      params: SimParams) -> Observation:
    z = lidar_scan(spec, robot.pose, params) / params.max_range
    d = goal_distance(spec, robot.x, robot.y)
    bearing = math.atan2(spec.goal[1] - robot.y, spec.goal[0] - robot.x)
    phi = wrap_angle(bearing - robot.heading)
    return Observation(z=z, d=d, phi=phi, a1=float(prev_action[0]), a2=float(prev_action[1]))


def reward(prev_obs: Observation, action, next_obs: Observation, done_reason: str,
           params: SimParams) -> float:
    if done_reason == "goal":
        return params.goal_reward
    if done_reason == "collision":
        return params.collision_reward
    progress = params.progress_gain * (prev_obs.d - next_obs.d)
    return progress - params.step_cost - params.spin_penalty * abs(float(action[1]))


def advance_movers(spec: WorldSpec, dt: float) -> None:
    for ob in spec.obstacles:
        if not ob.waypoints:
            continue
        tx, ty = ob.waypoints[ob.wp_index]
        dx, dy = tx - ob.x, ty - ob.y
        dist = math.hypot(dx, dy)
        move = ob.speed * dt
        if dist <= move:
            ob.x, ob.y = tx, ty
            ob.wp_index = (ob.wp_index + 1) % len(ob.waypoints)
        elif dist > 0.0:
            ob.x += move * dx / dist
            ob.y += move * dy / dist


def step(spec: WorldSpec, robot: RobotState, action, params: SimParams,
         prev_obs: Observation | None = None) -> tuple:
    """One control tick; returns (next RobotState, StepOutcome).

    Scripted movers advance first, then the robot integrates under unicycle
    kinematics using its pre-step heading for translation. Termination checks
    run in the order collision, goal, timeout.
    """
    a1 = float(np.clip(action[0], -1.0, 1.0))
    a2 = float(np.clip(action[1], -1.0, 1.0))
    v = a1 * params.v_max
    w = a2 * params.w_max

    advance_movers(spec, params.dt)
    nx = robot.x + v * math.cos(robot.heading) * params.dt
    ny = robot.y + v * math.sin(robot.heading) * params.dt
    nh = robot.heading + w * params.dt
    nxt = RobotState(x=nx, y=ny, heading=nh, v=v, w=w,
                     elapsed_steps=robot.elapsed_steps + 1)

    if min_clearance(spec, nx, ny) < params.collision_clearance:
        done_reason = "collision"
    elif goal_distance(spec, nx, ny) < params.goal_radius:
        done_reason = "goal"
    elif nxt.elapsed_steps >= params.max_steps:
        done_reason = "timeout"
    else:
        done_reason = "none"

    obs = build_observation(spec, nxt, (a1, a2), params)
    if prev_obs is None:
        prev_obs = build_observation(spec, robot, (a1, a2), params)
    r = reward(prev_obs, (a1, a2), obs, done_reason, params)
    return nxt, StepOutcome(observation=obs, reward=r, done=done_reason != "none",
                            done_reason=done_reason)


def spawn_episode(spec: WorldSpec, seed: int, params: SimParams,
                  budget: int = 10_000) -> tuple:
    """Randomize movable obstacles, then place the robot.

    Re-placed obstacles keep at least 2 m surface separation from each other
    and 3 m from the goal. The sampled robot pose keeps at least 2 m clearance
    to every obstacle and 3 m to the goal; a fixed start in the spec is used
    verbatim. Rejection sampling shares a single try budget; exhausting it
    raises a spawn failure naming the violated constraint.
    """
    world = copy_world(spec)
    rng = np.random.default_rng(seed)
    tries = 0

    placed = [ob for ob in world.obstacles if not ob.movable]
    for ob in world.obstacles:
        if not ob.movable:
            continue
        r = ob.bounding_radius()
        while True:
            tries += 1
            if tries > budget:
                raise SpawnFailure("obstacle placement (2 m separation / 3 m goal)", tries - 1)
            ob.x = rng.uniform(r, world.width - r)
            ob.y = rng.uniform(r, world.height - r)
            if ob.signed_distance(world.goal[0], world.goal[1]) < 3.0:
                continue
            if any(math.hypot(ob.x - other.x, ob.y - other.y)
                   < 2.0 + r + other.bounding_radius() for other in placed):
                continue
            break
        placed.append(ob)

    if world.start is not None:
        sx, sy, sh = world.start
        robot = RobotState(x=sx, y=sy, heading=sh)
        if min_clearance(world, sx, sy) < params.collision_clearance:
            raise SpawnFailure("fixed start pose collides", tries)
        return world, robot

    margin = params.collision_clearance + 0.05
    while True:
        tries += 1
        if tries > budget:
            raise SpawnFailure("robot spawn (2 m obstacles / 3 m goal)", tries - 1)
        px = rng.uniform(margin, world.width - margin)
        py = rng.uniform(margin, world.height - margin)
        if goal_distance(world, px, py) < 3.0:
            continue
        if any(ob.signed_distance(px, py) < 2.0 for ob in world.obstacles):
            continue
        heading = rng.uniform(-math.pi, math.pi)
        return world, RobotState(x=px, y=py, heading=heading)


# ---------------------------------------------------------------- file format

_OBSTACLE_KEYS = {"shape", "x", "y", "radius", "width", "height", "heading",
                  "movable", "waypoints", "speed"}
_WORLD_KEYS = {"bounds", "goal", "obstacles", "start", "seed"}


def world_to_dict(spec: WorldSpec) -> dict:
    out = {
        "bounds": {"width": spec.width, "height": spec.height},
        "goal": {"x": spec.goal[0], "y": spec.goal[1]},
        "seed": spec.seed,
        "obstacles": [],
    }
    if spec.start is not None:
        out["start"] = {"x": spec.start[0], "y": spec.start[1], "heading": spec.start[2]}
    for ob in spec.obstacles:
        entry = {"shape": ob.shape, "x": ob.x, "y": ob.y, "movable": ob.movable}
        if ob.shape == "circle":
            entry["radius"] = ob.radius
        else:
            entry.update(width=ob.width, height=ob.height, heading=ob.heading)
        if ob.waypoints:
            entry["waypoints"] = [list(w) for w in ob.waypoints]
            entry["speed"] = ob.speed
        out["obstacles"].append(entry)
    return out


def world_from_dict(data: dict) -> WorldSpec:
    unknown = set(data) - _WORLD_KEYS
    if unknown:
        raise ContractViolation(f"unknown world keys: {sorted(unknown)}")
    try:
        bounds = data["bounds"]
        goal = data["goal"]
    except KeyError as exc:
        raise ContractViolation(f"world file missing required key {exc}") from exc
    obstacles = []
    for entry in data.get("obstacles", []):
        unknown = set(entry) - _OBSTACLE_KEYS
        if unknown:
            raise ContractViolation(f"unknown obstacle keys: {sorted(unknown)}")
        kwargs = dict(entry)
        if "waypoints" in kwargs and kwargs["waypoints"] is not None:
            kwargs["waypoints"] = [tuple(w) for w in kwargs["waypoints"]]
        obstacles.append(Obstacle(**kwargs))
    start = None
    if "start" in data and data["start"] is not None:
        s = data["start"]
        start = (s["x"], s["y"], s.get("heading", 0.0))
    return WorldSpec(
        width=bounds["width"],
        height=bounds["height"],
        goal=(goal["x"], goal["y"]),
        obstacles=obstacles,
        start=start,
        seed=data.get("seed", 0),
    )


def load_world(path) -> WorldSpec:
    with open(path, encoding="utf-8") as fh:
        return world_from_dict(json.load(fh))


def save_world(spec: WorldSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(world_to_dict(spec), fh, indent=2)
        fh.write("\n")


def trajectory_row(t: float, robot: RobotState, reward_value: float, done_reason: str) -> str:
    cells = [repr(float(c)) for c in (t, robot.x, robot.y, robot.heading, robot.v, robot.w,
                                      reward_value)]
    cells.append(done_reason)
    return ",".join(cells)


TRAJECTORY_HEADER = "t,x,y,theta,v,omega,reward,done_reason"
