/**
 * Console wiring: connect to the twin feed, reduce messages into state,
 * paint both arenas and the range sparkline, and forward teleop keys when
 * a retraining window is open.
 *
 * The feed address comes from the page query (?ws=host:port), defaulting to
 * the local twin console port.
 */

import { ConsoleClient } from "./client.js";
import {
  PHYSICAL_STYLE,
  VIRTUAL_STYLE,
  bannerText,
  drawArena,
  drawSparkline,
  type WorldOutline,
} from "./render.js";
import { initialState, reduce, setActiveKey, setConnection, type ConsoleState } from "./state.js";
import { TELEOP_TABLE, teleopLine } from "./teleop.js";

interface Meta {
  fov: number;
  max_range: number;
  risk_threshold: number;
}

const DEFAULT_META: Meta = { fov: Math.PI, max_range: 10.0, risk_threshold: 1.0 };
const DEFAULT_WORLD: WorldOutline = { width: 10, height: 8, goal: [8.5, 4.0] };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function context(id: string): CanvasRenderingContext2D {
  const canvas = el<HTMLCanvasElement>(id);
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error(`no 2d context for #${id}`);
  return ctx;
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const wsAddr = params.get("ws") ?? `${window.location.hostname || "127.0.0.1"}:8766`;
  const meta = DEFAULT_META;
  const world = DEFAULT_WORLD;

  let state: ConsoleState = initialState();
  const physicalCtx = context("physical");
  const virtualCtx = context("virtual");
  const sparkCtx = context("sparkline");
  const banner = el<HTMLDivElement>("banner");
  const status = el<HTMLSpanElement>("status");
  const keyGrid = el<HTMLDivElement>("keys");

  for (const key of Object.keys(TELEOP_TABLE)) {
    const cell = document.createElement("span");
    cell.className = "key";
    cell.id = `key-${key}`;
    cell.textContent = key;
    keyGrid.appendChild(cell);
  }

  const paint = () => {
    const vp = { width: 400, height: 340, worldWidth: world.width, worldHeight: world.height, margin: 12 };
    drawArena(physicalCtx, vp, world, state.physicalPose, state.ranges, [], meta.fov, PHYSICAL_STYLE);
    drawArena(virtualCtx, vp, world, state.virtualPose, [], state.obstacles, meta.fov, VIRTUAL_STYLE);
    drawSparkline(sparkCtx, 820, 70, state.minRangeHistory, meta.risk_threshold, meta.max_range);
    banner.textContent = bannerText(state);
    banner.dataset.mode = state.mode;
    status.textContent = state.connection;
    status.dataset.connection = state.connection;
    for (const key of Object.keys(TELEOP_TABLE)) {
      el<HTMLSpanElement>(`key-${key}`).classList.toggle("active", state.activeKey === key);
    }
  };

  const client = new ConsoleClient(
    `ws://${wsAddr}`,
    {
      onMessage: (msg) => {
        state = reduce(state, msg);
        paint();
      },
      onStatus: (connection) => {
        state = setConnection(state, connection);
        paint();
      },
    },
    (url) => new WebSocket(url),
  );
  client.connect();

  window.addEventListener("keydown", (ev) => {
    const line = teleopLine(state.mode, ev.key, state.tick);
    if (line === null) return;
    if (client.sendLine(line)) {
      state = setActiveKey(state, ev.key);
      paint();
    }
  });

  paint();
}

main();
