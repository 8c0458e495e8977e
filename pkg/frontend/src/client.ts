/** The 20 Hz command beat: input snapshot in, at most one cmd out. */

import type { InputTracker } from "./input.js";
import type { ClientMessage } from "./protocol.js";

export class CommandSession {
  private seq = 0;

  /** One beat. Emits any queued handover, then the current drive command.
   *
   * Disconnected beats emit nothing and drop a queued handover, so a
   * reconnect never replays stale intent; the seq counter lives here and
   * only ever moves forward, across reconnects included.
   */
  tick(
    input: InputTracker,
    send: (msg: ClientMessage) => void,
    connected: boolean,
  ): ClientMessage[] {
    if (!connected) {
      input.takeHandover();
      return [];
    }
    const out: ClientMessage[] = [];
    if (input.takeHandover()) out.push({ type: "handover" });
    const cmd = input.command();
    if (cmd) out.push({ type: "cmd", v: cmd.v, omega: cmd.omega, seq: ++this.seq });
    for (const m of out) send(m);
    return out;
  }

  get lastSeq(): number {
    return this.seq;
  }
}
