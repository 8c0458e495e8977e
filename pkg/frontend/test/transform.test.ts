import { describe, expect, it } from "vitest";

import { fitViewport, worldToScreen, type Viewport } from "../src/transform.js";

describe("fitViewport", () => {
  it("uses one uniform scale for both axes", () => {
    const vp = fitViewport(0, 0, 10, 5, 200, 200, 0);
    expect(vp.scale).toBe(20); // limited by width, same scale vertically
    expect(vp.padX).toBe(0);
    expect(vp.padY).toBe(50); // 5 m * 20 px/m = 100 px, centered in 200
  });

  it("preserves distance ratios in both directions", () => {
    const vp = fitViewport(-2, 1, 8, 6, 300, 170, 10);
    const [ax, ay] = worldToScreen(vp, [0, 2]);
    const [bx, by] = worldToScreen(vp, [3, 2]);
    const [cx, cy] = worldToScreen(vp, [0, 4]);
    expect(Math.hypot(bx - ax, by - ay) / 3).toBeCloseTo(vp.scale, 10);
    expect(Math.hypot(cx - ax, cy - ay) / 2).toBeCloseTo(vp.scale, 10);
  });
});

describe("worldToScreen", () => {
  const identity: Viewport = {
    originX: -1.5,
    originY: 2.0,
    scale: 1,
    padX: 0,
    padY: 0,
    canvasW: 400,
    canvasH: 300,
  };

  it("maps the world origin to the canvas bottom-left at identity zoom", () => {
    expect(worldToScreen(identity, [-1.5, 2.0])).toEqual([0, 300]);
  });

  it("flips the y axis: higher world y means smaller screen y", () => {
    const [, lowY] = worldToScreen(identity, [0, 2.5]);
    const [, highY] = worldToScreen(identity, [0, 4.0]);
    expect(highY).toBeLessThan(lowY);
    const [rightX] = worldToScreen(identity, [1.0, 2.5]);
    const [leftX] = worldToScreen(identity, [-1.0, 2.5]);
    expect(rightX).toBeGreaterThan(leftX);
  });
});
