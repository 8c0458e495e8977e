/** World-to-canvas mapping: uniform scale, y axis flipped.
 *
 * World x grows right and y grows up; canvas y grows down. The viewport
 * centers the world rectangle at the largest uniform scale that fits
 * inside the margin. With scale 1 and zero padding the world origin lands
 * exactly at the canvas bottom-left corner: (x0, y0) -> (0, canvasH).
 */

import type { Point } from "./protocol.js";

export interface Viewport {
  originX: number;
  originY: number;
  scale: number;
  padX: number;
  padY: number;
  canvasW: number;
  canvasH: number;
}

export function fitViewport(
  originX: number,
  originY: number,
  worldW: number,
  worldH: number,
  canvasW: number,
  canvasH: number,
  margin = 12,
): Viewport {
  const scale = Math.min((canvasW - 2 * margin) / worldW, (canvasH - 2 * margin) / worldH);
  return {
    originX,
    originY,
    scale,
    padX: (canvasW - worldW * scale) / 2,
    padY: (canvasH - worldH * scale) / 2,
    canvasW,
    canvasH,
  };
}

export function worldToScreen(vp: Viewport, p: Point): Point {
  return [
    vp.padX + (p[0] - vp.originX) * vp.scale,
    vp.canvasH - vp.padY - (p[1] - vp.originY) * vp.scale,
  ];
}
