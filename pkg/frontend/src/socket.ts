/** Websocket wrapper that reconnects with exponential backoff.
 *
 * Delay starts at 0.5 s, doubles per failed attempt, caps at 10 s, and
 * resets once a connection opens. send() reports whether the frame was
 * actually handed to an open socket so callers can gate on it.
 */

export interface WebSocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => WebSocketLike;
export type Schedule = (fn: () => void, ms: number) => void;

export interface SocketEvents {
  onMessage(data: string): void;
  onStatus(connected: boolean): void;
}

const BASE_DELAY_MS = 500;
const MAX_DELAY_MS = 10_000;

export class ReconnectingSocket {
  connected = false;
  private ws: WebSocketLike | null = null;
  private delay = BASE_DELAY_MS;
  private stopped = false;

  constructor(
    private readonly url: string,
    private readonly factory: SocketFactory,
    private readonly events: SocketEvents,
    private readonly schedule: Schedule = (fn, ms) => void setTimeout(fn, ms),
  ) {}

  connect(): void {
    if (this.stopped) return;
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.delay = BASE_DELAY_MS;
      this.connected = true;
      this.events.onStatus(true);
    };
    ws.onmessage = (ev) => this.events.onMessage(String(ev.data));
    ws.onerror = () => {
      // the close handler owns recovery
    };
    ws.onclose = () => {
      const was = this.connected;
      this.connected = false;
      if (was) this.events.onStatus(false);
      if (!this.stopped) {
        this.schedule(() => this.connect(), this.delay);
        this.delay = Math.min(this.delay * 2, MAX_DELAY_MS);
      }
    };
  }

  send(data: string): boolean {
    if (!this.connected || !this.ws) return false;
    this.ws.send(data);
    return true;
  }

  close(): void {
    this.stopped = true;
    this.connected = false;
    this.ws?.close();
  }
}
