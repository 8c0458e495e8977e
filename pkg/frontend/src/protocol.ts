/** Message shapes shared with the simulator's websocket service.
 *
 * Client to server: {"type": "cmd", v, omega, seq} and {"type": "handover"}.
 * Server to client: one "map" message per session, then "state" at every
 * simulator tick and a final "end". Anything else is ignored.
 */

export type Point = [number, number];

export interface DomainShape {
  apex: Point;
  axis: Point;
  h: number;
  r: number;
}

export interface SessionMetrics {
  t_total: number;
  rho: number;
  d_clear: number;
  decisions: number;
  triggers: number;
}

export interface StateMessage {
  type: "state";
  tick: number;
  pose: [number, number, number];
  path: Point[];
  domain: DomainShape | null;
  goal: Point;
  subgoals: Point[];
  metrics: SessionMetrics;
}

export interface MapMessage {
  type: "map";
  width_cells: number;
  height_cells: number;
  resolution: number;
  origin: Point;
  cells: string;
  start: Point;
  goal: Point;
  robot_radius: number;
}

export interface EndMessage {
  type: "end";
  success: boolean;
  metrics: SessionMetrics;
}

export type ServerMessage = StateMessage | MapMessage | EndMessage;

export interface CmdMessage {
  type: "cmd";
  v: number;
  omega: number;
  seq: number;
}

export interface HandoverMessage {
  type: "handover";
}

export type ClientMessage = CmdMessage | HandoverMessage;

function isNum(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function isPoint(x: unknown): x is Point {
  return Array.isArray(x) && x.length === 2 && isNum(x[0]) && isNum(x[1]);
}

function isPointList(x: unknown): x is Point[] {
  return Array.isArray(x) && x.every(isPoint);
}

function isMetrics(x: unknown): x is SessionMetrics {
  if (typeof x !== "object" || x === null) return false;
  const m = x as Record<string, unknown>;
  return (
    isNum(m.t_total) &&
    isNum(m.rho) &&
    isNum(m.d_clear) &&
    isNum(m.decisions) &&
    isNum(m.triggers)
  );
}

function isDomain(x: unknown): x is DomainShape {
  if (typeof x !== "object" || x === null) return false;
  const d = x as Record<string, unknown>;
  return isPoint(d.apex) && isPoint(d.axis) && isNum(d.h) && isNum(d.r);
}

function isState(m: Record<string, unknown>): m is Record<string, unknown> & StateMessage {
  return (
    isNum(m.tick) &&
    Array.isArray(m.pose) &&
    m.pose.length === 3 &&
    m.pose.every(isNum) &&
    isPointList(m.path) &&
    (m.domain === null || isDomain(m.domain)) &&
    isPoint(m.goal) &&
    isPointList(m.subgoals) &&
    isMetrics(m.metrics)
  );
}

function isMap(m: Record<string, unknown>): m is Record<string, unknown> & MapMessage {
  return (
    isNum(m.width_cells) &&
    isNum(m.height_cells) &&
    m.width_cells > 0 &&
    m.height_cells > 0 &&
    isNum(m.resolution) &&
    m.resolution > 0 &&
    isPoint(m.origin) &&
    typeof m.cells === "string" &&
    isPoint(m.start) &&
    isPoint(m.goal) &&
    isNum(m.robot_radius)
  );
}

function isEnd(m: Record<string, unknown>): m is Record<string, unknown> & EndMessage {
  return typeof m.success === "boolean" && isMetrics(m.metrics);
}

/** Parses one inbound frame; malformed payloads and unknown types map to
 * null so a single bad frame can never take the monitor down. */
export function parseServerMessage(raw: unknown): ServerMessage | null {
  let msg: unknown = raw;
  if (typeof raw === "string") {
    try {
      msg = JSON.parse(raw);
    } catch {
      return null;
    }
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as Record<string, unknown>;
  switch (m.type) {
    case "state":
      return isState(m) ? (m as StateMessage) : null;
    case "map":
      return isMap(m) ? (m as MapMessage) : null;
    case "end":
      return isEnd(m) ? (m as EndMessage) : null;
    default:
      return null;
  }
}

export interface MapData {
  width: number;
  height: number;
  resolution: number;
  origin: Point;
  start: Point;
  goal: Point;
  robotRadius: number;
  /** row-major occupancy, 1 = wall */
  cells: Uint8Array;
  /** world-frame centers of occupied cells, precomputed for rendering */
  occupied: Point[];
}

/** Unpacks the base64, row-major, most-significant-bit-first cell payload. */
export function decodeMap(msg: MapMessage): MapData {
  const raw = atob(msg.cells);
  const n = msg.width_cells * msg.height_cells;
  if (raw.length * 8 < n) {
    throw new Error(`map payload too short: ${raw.length * 8} bits for ${n} cells`);
  }
  const cells = new Uint8Array(n);
  const occupied: Point[] = [];
  for (let i = 0; i < n; i++) {
    const bit = (raw.charCodeAt(i >> 3) >> (7 - (i & 7))) & 1;
    cells[i] = bit;
    if (bit) {
      const row = Math.floor(i / msg.width_cells);
      const col = i % msg.width_cells;
      occupied.push([
        msg.origin[0] + (col + 0.5) * msg.resolution,
        msg.origin[1] + (row + 0.5) * msg.resolution,
      ]);
    }
  }
  return {
    width: msg.width_cells,
    height: msg.height_cells,
    resolution: msg.resolution,
    origin: msg.origin,
    start: msg.start,
    goal: msg.goal,
    robotRadius: msg.robot_radius,
    cells,
    occupied,
  };
}
