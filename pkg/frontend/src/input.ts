/** Keyboard and gamepad state folded into one (v, omega) intent.
 *
 * No input held means no command at all, not a zero command: the server
 * counts a tick as human-engaged when a command arrived, so streaming
 * zeros would poison the interaction metric.
 */

export interface InputConfig {
  vScale: number;
  omegaScale: number;
  handoverKey: string;
  deadzone: number;
}

export const DEFAULT_INPUT: InputConfig = {
  vScale: 0.4,
  omegaScale: 1.2,
  handoverKey: "h",
  deadzone: 0.15,
};

const FORWARD = new Set(["arrowup", "w"]);
const BACK = new Set(["arrowdown", "s"]);
const LEFT = new Set(["arrowleft", "a"]);
const RIGHT = new Set(["arrowright", "d"]);

export const DRIVE_KEYS: ReadonlySet<string> = new Set([
  ...FORWARD,
  ...BACK,
  ...LEFT,
  ...RIGHT,
]);

export class InputTracker {
  private held = new Set<string>();
  private axes: [number, number] | null = null;
  private handoverQueued = false;

  constructor(private readonly cfg: InputConfig = DEFAULT_INPUT) {}

  keyDown(key: string): void {
    this.held.add(key.toLowerCase());
  }

  keyUp(key: string): void {
    const k = key.toLowerCase();
    this.held.delete(k);
    if (k === this.cfg.handoverKey) this.handoverQueued = true;
  }

  /** Left-stick axes in the standard mapping (x right, y down), or null. */
  setGamepad(axes: [number, number] | null): void {
    this.axes = axes;
  }

  /** Focus loss: forget everything held so keys cannot stick. */
  clear(): void {
    this.held.clear();
    this.axes = null;
  }

  /** One-shot: true exactly once after the handover key was released. */
  takeHandover(): boolean {
    const q = this.handoverQueued;
    this.handoverQueued = false;
    return q;
  }

  private holds(keys: ReadonlySet<string>): boolean {
    for (const k of keys) if (this.held.has(k)) return true;
    return false;
  }

  /** Current drive intent, or null when no input is active. */
  command(): { v: number; omega: number } | null {
    const f = this.holds(FORWARD);
    const b = this.holds(BACK);
    const l = this.holds(LEFT);
    const r = this.holds(RIGHT);
    if (f || b || l || r) {
      return {
        v: this.cfg.vScale * (Number(f) - Number(b)),
        omega: this.cfg.omegaScale * (Number(l) - Number(r)),
      };
    }
    if (this.axes) {
      const [x, y] = this.axes;
      if (Math.abs(x) > this.cfg.deadzone || Math.abs(y) > this.cfg.deadzone) {
        const dz = (a: number) => (Math.abs(a) > this.cfg.deadzone ? a : 0);
        return { v: -dz(y) * this.cfg.vScale, omega: -dz(x) * this.cfg.omegaScale };
      }
    }
    return null;
  }
}
