/** Frame rendering as a pure draw-op list.
 *
 * renderFrame is a function of the view snapshot alone; the canvas shell
 * (drawOps) just replays the ops, which keeps everything above it
 * testable without a DOM.
 */

import type { Point } from "./protocol.js";
import { fitViewport, worldToScreen, type Viewport } from "./transform.js";
import type { SessionView } from "./view.js";

export type DrawOp =
  | { kind: "clear"; color: string }
  | { kind: "cells"; rects: Point[]; size: number; color: string }
  | { kind: "polyline"; points: Point[]; color: string; width: number }
  | { kind: "polygon"; points: Point[]; fill: string; stroke: string }
  | { kind: "disc"; at: Point; r: number; color: string }
  | { kind: "ring"; at: Point; r: number; color: string; width: number }
  | { kind: "text"; at: Point; text: string; color: string; font: string };

export const COLORS = {
  background: "#10141a",
  wall: "#4a5568",
  path: "#4fa3ff",
  cone: "rgba(255, 176, 32, 0.25)",
  coneEdge: "#ffb020",
  goal: "#34d399",
  subgoal: "#f472b6",
  robot: "#e2e8f0",
  text: "#cbd5e1",
  muted: "#64748b",
};

const FONT = "14px system-ui, sans-serif";

function conePolygon(vp: Viewport, apex: Point, axis: Point, h: number, r: number): Point[] {
  const n = Math.hypot(axis[0], axis[1]) || 1;
  const u: Point = [axis[0] / n, axis[1] / n];
  const base: Point = [apex[0] + h * u[0], apex[1] + h * u[1]];
  const left: Point = [-u[1], u[0]];
  return [
    worldToScreen(vp, apex),
    worldToScreen(vp, [base[0] + r * left[0], base[1] + r * left[1]]),
    worldToScreen(vp, [base[0] - r * left[0], base[1] - r * left[1]]),
  ];
}

function robotPolygon(vp: Viewport, pose: [number, number, number], radius: number): Point[] {
  const [x, y, theta] = pose;
  const tip = 1.6 * radius;
  const back = 1.2 * radius;
  const spread = 2.4; // radians off the heading for the two rear corners
  const pts: Point[] = [
    [x + tip * Math.cos(theta), y + tip * Math.sin(theta)],
    [x + back * Math.cos(theta + spread), y + back * Math.sin(theta + spread)],
    [x + back * Math.cos(theta - spread), y + back * Math.sin(theta - spread)],
  ];
  return pts.map((p) => worldToScreen(vp, p));
}

export function renderFrame(view: SessionView, canvasW: number, canvasH: number): DrawOp[] {
  const ops: DrawOp[] = [{ kind: "clear", color: COLORS.background }];
  if (!view.map || !view.state) {
    ops.push({
      kind: "text",
      at: [canvasW / 2, canvasH / 2],
      text: view.connected ? "waiting for session" : "connecting",
      color: COLORS.muted,
      font: FONT,
    });
    return ops;
  }
  const map = view.map;
  const state = view.state;
  const vp = fitViewport(
    map.origin[0],
    map.origin[1],
    map.width * map.resolution,
    map.height * map.resolution,
    canvasW,
    canvasH,
  );
  const cell = map.resolution * vp.scale;
  ops.push({
    kind: "cells",
    // each rect is the top-left screen corner of one occupied cell
    rects: map.occupied.map((c) => {
      const [sx, sy] = worldToScreen(vp, c);
      return [sx - cell / 2, sy - cell / 2] as Point;
    }),
    size: cell,
    color: COLORS.wall,
  });

  if (state.path.length >= 2) {
    ops.push({
      kind: "polyline",
      points: state.path.map((p) => worldToScreen(vp, p)),
      color: COLORS.path,
      width: 2,
    });
  }
  if (state.domain) {
    const d = state.domain;
    ops.push({
      kind: "polygon",
      points: conePolygon(vp, d.apex, d.axis, d.h, d.r),
      fill: COLORS.cone,
      stroke: COLORS.coneEdge,
    });
  }
  ops.push({
    kind: "ring",
    at: worldToScreen(vp, state.goal),
    r: Math.max(5, 0.15 * vp.scale),
    color: COLORS.goal,
    width: 2,
  });
  for (const s of state.subgoals) {
    ops.push({
      kind: "disc",
      at: worldToScreen(vp, s),
      r: Math.max(3, 0.06 * vp.scale),
      color: COLORS.subgoal,
    });
  }
  ops.push({
    kind: "polygon",
    points: robotPolygon(vp, state.pose, map.robotRadius),
    fill: COLORS.robot,
    stroke: COLORS.robot,
  });

  const m = state.metrics;
  const status = view.end
    ? view.end.success
      ? "goal reached"
      : "session over"
    : view.inputActive
      ? "steering"
      : "autonomous";
  const line =
    `ρ ${m.rho.toFixed(2)}   T ${m.t_total.toFixed(1)} s   ` +
    `clearance ${m.d_clear.toFixed(2)} m   triggers ${m.triggers}/${m.decisions}`;
  ops.push({ kind: "text", at: [12, 20], text: line, color: COLORS.text, font: FONT });
  ops.push({
    kind: "text",
    at: [12, 40],
    text: `${view.connected ? "connected" : "reconnecting"} | ${status}`,
    color: COLORS.muted,
    font: FONT,
  });
  return ops;
}

/** Replays a draw-op list onto a 2d context. Browser-only shell. */
export function drawOps(ctx: CanvasRenderingContext2D, ops: DrawOp[]): void {
  for (const op of ops) {
    switch (op.kind) {
      case "clear":
        ctx.fillStyle = op.color;
        ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
        break;
      case "cells":
        ctx.fillStyle = op.color;
        for (const [x, y] of op.rects) ctx.fillRect(x, y, op.size, op.size);
        break;
      case "polyline":
        ctx.strokeStyle = op.color;
        ctx.lineWidth = op.width;
        ctx.beginPath();
        op.points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
        ctx.stroke();
        break;
      case "polygon":
        ctx.fillStyle = op.fill;
        ctx.strokeStyle = op.stroke;
        ctx.beginPath();
        op.points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
        ctx.closePath();
        ctx.fill();
        ctx.stroke();
        break;
      case "disc":
        ctx.fillStyle = op.color;
        ctx.beginPath();
        ctx.arc(op.at[0], op.at[1], op.r, 0, 2 * Math.PI);
        ctx.fill();
        break;
      case "ring":
        ctx.strokeStyle = op.color;
        ctx.lineWidth = op.width;
        ctx.beginPath();
        ctx.arc(op.at[0], op.at[1], op.r, 0, 2 * Math.PI);
        ctx.stroke();
        break;
      case "text":
        ctx.fillStyle = op.color;
        ctx.font = op.font;
        ctx.fillText(op.text, op.at[0], op.at[1]);
        break;
    }
  }
}
