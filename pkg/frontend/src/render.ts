/**
 * Rendering: pure geometry and color decisions, then a thin canvas painter.
 *
 * The pure half is what the tests cover. Obstacle estimates are colored by
 * their proximity flag, which flips at the 1.5 m surface-distance boundary;
 * the console re-derives the same classification locally so an operator can
 * see at a glance which returns the twin considers close.
 */

import type { ObstacleEstimate } from "./protocol.js";
import type { ConsoleState } from "./state.js";

export const NEAR_COLOR = "#e4572e"; // hazard
export const FAR_COLOR = "#4f8fc0"; // calm
export const PROXIMITY_BOUNDARY_M = 1.5;

/** Strictly-below boundary, matching the twin's flag computation. */
export function classifySurfaceDistance(surfaceDistance: number): "near" | "far" {
  return surfaceDistance < PROXIMITY_BOUNDARY_M ? "near" : "far";
}

export function estimateColor(est: ObstacleEstimate): string {
  return est.proximity === "near" ? NEAR_COLOR : FAR_COLOR;
}

/** Surface distance from a pose to an estimate: centroid range minus radius. */
export function surfaceDistance(
  pose: readonly [number, number, number],
  est: ObstacleEstimate,
): number {
  const dx = est.centroid[0] - pose[0];
  const dy = est.centroid[1] - pose[1];
  return Math.hypot(dx, dy) - est.radius;
}

export interface Viewport {
  width: number;
  height: number;
  worldWidth: number;
  worldHeight: number;
  margin: number;
}

/** World meters -> canvas pixels (y flipped; world origin bottom-left). */
export function toCanvas(vp: Viewport, x: number, y: number): [number, number] {
  const sx = (vp.width - 2 * vp.margin) / vp.worldWidth;
  const sy = (vp.height - 2 * vp.margin) / vp.worldHeight;
  const s = Math.min(sx, sy);
  return [vp.margin + x * s, vp.height - vp.margin - y * s];
}

export function scale(vp: Viewport): number {
  return Math.min(
    (vp.width - 2 * vp.margin) / vp.worldWidth,
    (vp.height - 2 * vp.margin) / vp.worldHeight,
  );
}

/** Beam endpoints for a scan fan at a pose, for drawing. */
export function beamEndpoints(
  pose: readonly [number, number, number],
  ranges: readonly number[],
  fov: number,
): Array<[number, number]> {
  const [px, py, heading] = pose;
  const n = ranges.length;
  return ranges.map((r, i) => {
    const offset = n === 1 ? 0 : -0.5 * fov + (fov * i) / (n - 1);
    const angle = heading + offset;
    return [px + r * Math.cos(angle), py + r * Math.sin(angle)];
  });
}

export interface ArenaStyle {
  wall: string;
  robot: string;
  goal: string;
  beam: string;
}

export const PHYSICAL_STYLE: ArenaStyle = {
  wall: "#2b2b2b",
  robot: "#1d7a46",
  goal: "#c9a227",
  beam: "rgba(90, 90, 90, 0.35)",
};

export const VIRTUAL_STYLE: ArenaStyle = {
  wall: "#2b2b2b",
  robot: "#6b4fa0",
  goal: "#c9a227",
  beam: "rgba(120, 90, 160, 0.25)",
};

export interface WorldOutline {
  width: number;
  height: number;
  goal: [number, number];
}

export function drawArena(
  ctx: CanvasRenderingContext2D,
  vp: Viewport,
  world: WorldOutline,
  pose: readonly [number, number, number] | null,
  ranges: readonly number[],
  obstacles: readonly ObstacleEstimate[],
  fov: number,
  style: ArenaStyle,
): void {
  ctx.clearRect(0, 0, vp.width, vp.height);
  const s = scale(vp);

  ctx.strokeStyle = style.wall;
  ctx.lineWidth = 2;
  const [ox, oy] = toCanvas(vp, 0, world.height);
  ctx.strokeRect(ox, oy, world.width * s, world.height * s);

  const [gx, gy] = toCanvas(vp, world.goal[0], world.goal[1]);
  ctx.strokeStyle = style.goal;
  ctx.beginPath();
  ctx.arc(gx, gy, 0.5 * s, 0, 2 * Math.PI);
  ctx.stroke();

  for (const est of obstacles) {
    const [cx, cy] = toCanvas(vp, est.centroid[0], est.centroid[1]);
    ctx.fillStyle = estimateColor(est);
    ctx.beginPath();
    ctx.arc(cx, cy, Math.max(est.radius * s, 2), 0, 2 * Math.PI);
    ctx.fill();
  }

  if (pose === null) return;
  ctx.strokeStyle = style.beam;
  ctx.lineWidth = 1;
  const [rx, ry] = toCanvas(vp, pose[0], pose[1]);
  for (const [ex, ey] of beamEndpoints(pose, ranges, fov)) {
    const [cx, cy] = toCanvas(vp, ex, ey);
    ctx.beginPath();
    ctx.moveTo(rx, ry);
    ctx.lineTo(cx, cy);
    ctx.stroke();
  }

  ctx.fillStyle = style.robot;
  ctx.beginPath();
  ctx.arc(rx, ry, 5, 0, 2 * Math.PI);
  ctx.fill();
  ctx.strokeStyle = style.robot;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(rx, ry);
  ctx.lineTo(rx + 12 * Math.cos(-pose[2]), ry + 12 * Math.sin(-pose[2]));
  ctx.stroke();
}

export function drawSparkline(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  history: readonly number[],
  gate: number,
  maxRange: number,
): void {
  ctx.clearRect(0, 0, width, height);
  const yOf = (v: number) => height - (Math.min(v, maxRange) / maxRange) * height;

  ctx.strokeStyle = NEAR_COLOR;
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.moveTo(0, yOf(gate));
  ctx.lineTo(width, yOf(gate));
  ctx.stroke();
  ctx.setLineDash([]);

  if (history.length < 2) return;
  ctx.strokeStyle = FAR_COLOR;
  ctx.beginPath();
  history.forEach((v, i) => {
    const x = (i / (history.length - 1)) * width;
    if (i === 0) ctx.moveTo(x, yOf(v));
    else ctx.lineTo(x, yOf(v));
  });
  ctx.stroke();
}

/** Mode banner text plus the detail the operator cares about in that mode. */
export function bannerText(state: ConsoleState): string {
  switch (state.mode) {
    case "deploy":
      return state.lastCheckpointId
        ? `DEPLOY (checkpoint ${state.lastCheckpointId})`
        : "DEPLOY";
    case "halted":
      return `HALTED (${state.lastHaltCause ?? "unknown cause"})`;
    case "retraining":
      return "RETRAINING: teleop keys live";
  }
}
