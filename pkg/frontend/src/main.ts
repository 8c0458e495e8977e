/** Browser bootstrap: socket, input listeners, 20 Hz command beat,
 * animation-frame render loop. Everything interesting lives in the pure
 * modules this file wires together. */

import { CommandSession } from "./client.js";
import { DEFAULT_INPUT, DRIVE_KEYS, InputTracker } from "./input.js";
import { parseServerMessage } from "./protocol.js";
import { drawOps, renderFrame } from "./render.js";
import { ReconnectingSocket, type WebSocketLike } from "./socket.js";
import { applyServerMessage, createView } from "./view.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d");
if (!ctx) throw new Error("canvas 2d context unavailable");

function resize(): void {
  canvas.width = canvas.clientWidth * devicePixelRatio;
  canvas.height = canvas.clientHeight * devicePixelRatio;
}
window.addEventListener("resize", resize);
resize();

const view = createView();
const input = new InputTracker(DEFAULT_INPUT);
const session = new CommandSession();

const socket = new ReconnectingSocket(
  `ws://${location.host}/ws`,
  (url) => new WebSocket(url) as unknown as WebSocketLike,
  {
    onMessage: (raw) => {
      const msg = parseServerMessage(raw);
      if (msg) applyServerMessage(view, msg);
    },
    onStatus: (connected) => {
      view.connected = connected;
    },
  },
);
socket.connect();

window.addEventListener("keydown", (ev) => {
  const key = ev.key.toLowerCase();
  if (DRIVE_KEYS.has(key) || key === DEFAULT_INPUT.handoverKey) ev.preventDefault();
  input.keyDown(ev.key);
});
window.addEventListener("keyup", (ev) => input.keyUp(ev.key));
window.addEventListener("blur", () => input.clear());

setInterval(() => {
  const pad = navigator.getGamepads?.()[0];
  input.setGamepad(
    pad && pad.axes.length >= 2 ? [pad.axes[0] ?? 0, pad.axes[1] ?? 0] : null,
  );
  const sent = session.tick(input, (m) => void socket.send(JSON.stringify(m)), socket.connected);
  view.inputActive = sent.some((m) => m.type === "cmd");
}, 50);

function frame(): void {
  drawOps(ctx!, renderFrame(view, canvas.width, canvas.height));
  requestAnimationFrame(frame);
}
frame();
