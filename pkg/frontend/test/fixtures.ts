/** Canned-message builders and a seeded PRNG for deterministic tests. */

import type { MapMessage, SessionMetrics, StateMessage } from "../src/protocol.js";

/** mulberry32: tiny deterministic PRNG, uniform in [0, 1). */
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Packs a row-major 0/1 array most-significant-bit first, like the server. */
export function packCells(bits: number[]): string {
  const bytes = new Uint8Array(Math.ceil(bits.length / 8));
  bits.forEach((b, i) => {
    if (b) bytes[i >> 3]! |= 0x80 >> (i & 7);
  });
  let raw = "";
  for (const b of bytes) raw += String.fromCharCode(b);
  return btoa(raw);
}

export function borderCells(width: number, height: number): number[] {
  const bits = new Array<number>(width * height).fill(0);
  for (let r = 0; r < height; r++) {
    for (let c = 0; c < width; c++) {
      if (r === 0 || c === 0 || r === height - 1 || c === width - 1) {
        bits[r * width + c] = 1;
      }
    }
  }
  return bits;
}

export function makeMapMessage(overrides: Partial<MapMessage> = {}): MapMessage {
  const width = 20;
  const height = 16;
  return {
    type: "map",
    width_cells: width,
    height_cells: height,
    resolution: 0.1,
    origin: [-1.0, -0.8],
    cells: packCells(borderCells(width, height)),
    start: [-0.7, -0.5],
    goal: [0.7, 0.5],
    robot_radius: 0.15,
    ...overrides,
  };
}

export function makeMetrics(overrides: Partial<SessionMetrics> = {}): SessionMetrics {
  return { t_total: 12.3, rho: 0.42, d_clear: 0.5, decisions: 24, triggers: 6, ...overrides };
}

export function makeStateMessage(overrides: Partial<StateMessage> = {}): StateMessage {
  return {
    type: "state",
    tick: 1,
    pose: [-0.7, -0.5, 0.0],
    path: [
      [-0.7, -0.5],
      [-0.3, -0.2],
      [0.2, 0.2],
      [0.7, 0.5],
    ],
    domain: null,
    goal: [0.7, 0.5],
    subgoals: [],
    metrics: makeMetrics(),
    ...overrides,
  };
}
