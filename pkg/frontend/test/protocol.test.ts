import { execFileSync } from "node:child_process";
import { describe, expect, it } from "vitest";

import { decodeMap, parseServerMessage } from "../src/protocol.js";
import { makeMapMessage, makeStateMessage, packCells } from "./fixtures.js";

describe("parseServerMessage", () => {
  it("round-trips a state message", () => {
    const msg = makeStateMessage({ tick: 7 });
    const parsed = parseServerMessage(JSON.stringify(msg));
    expect(parsed).toEqual(msg);
  });

  it("accepts a non-null domain", () => {
    const msg = makeStateMessage({
      domain: { apex: [0, 0], axis: [1, 0], h: 1.2, r: 0.4 },
    });
    const parsed = parseServerMessage(JSON.stringify(msg));
    expect(parsed && parsed.type === "state" && parsed.domain?.h).toBe(1.2);
  });

  it("parses map and end messages", () => {
    expect(parseServerMessage(JSON.stringify(makeMapMessage()))?.type).toBe("map");
    const end = { type: "end", success: true, metrics: makeStateMessage().metrics };
    expect(parseServerMessage(JSON.stringify(end))?.type).toBe("end");
  });

  it("ignores unknown types, malformed json, and missing fields", () => {
    expect(parseServerMessage('{"type": "telemetry", "x": 1}')).toBeNull();
    expect(parseServerMessage("{not json")).toBeNull();
    expect(parseServerMessage("42")).toBeNull();
    const broken = { ...makeStateMessage(), pose: [1, 2] };
    expect(parseServerMessage(JSON.stringify(broken))).toBeNull();
    const badDomain = makeStateMessage({
      domain: { apex: [0, 0], axis: [1, 0], h: "tall", r: 0.1 } as never,
    });
    expect(parseServerMessage(JSON.stringify(badDomain))).toBeNull();
  });
});

describe("decodeMap", () => {
  it("unpacks row-major msb-first bits", () => {
    const bits = [1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0]; // 5x3
    const msg = makeMapMessage({
      width_cells: 5,
      height_cells: 3,
      cells: packCells(bits),
      origin: [0, 0],
    });
    const map = decodeMap(msg);
    expect(Array.from(map.cells)).toEqual(bits);
    const centers: [number, number][] = [
      [0.05, 0.05],
      [0.35, 0.05],
      [0.05, 0.25],
    ];
    expect(map.occupied).toHaveLength(centers.length);
    centers.forEach(([x, y], i) => {
      expect(map.occupied[i]![0]).toBeCloseTo(x, 12);
      expect(map.occupied[i]![1]).toBeCloseTo(y, 12);
    });
  });

  it("rejects a payload shorter than the grid", () => {
    const msg = makeMapMessage({ width_cells: 50, height_cells: 50, cells: btoa("ab") });
    expect(() => decodeMap(msg)).toThrow(/too short/);
  });

  it("matches the simulator's own encoder", () => {
    const script = [
      "import json, numpy as np",
      "from coneplan.worldmap import OccupancyGrid, grid_to_dict",
      "cells = np.zeros((4, 6), dtype=bool)",
      "cells[0, :] = True",
      "cells[2, 3] = True",
      "grid = OccupancyGrid(0.5, (1.0, -2.0), cells)",
      "print(json.dumps(grid_to_dict(grid)))",
    ].join("\n");
    const out = execFileSync("python3", ["-c", script], {
      cwd: new URL("../..", import.meta.url).pathname,
      encoding: "utf-8",
    });
    const doc = JSON.parse(out);
    const map = decodeMap({
      type: "map",
      ...doc,
      start: [0, 0],
      goal: [1, 1],
      robot_radius: 0.15,
    });
    expect(map.width).toBe(6);
    expect(map.height).toBe(4);
    const expected = new Array(24).fill(0);
    for (let c = 0; c < 6; c++) expected[c] = 1;
    expected[2 * 6 + 3] = 1;
    expect(Array.from(map.cells)).toEqual(expected);
    expect(map.occupied[0]).toEqual([1.25, -1.75]);
  });
});
