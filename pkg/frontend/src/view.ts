/** Single mutable slot between the socket handler and the render loop. */

import {
  decodeMap,
  type EndMessage,
  type MapData,
  type ServerMessage,
  type StateMessage,
} from "./protocol.js";

export interface SessionView {
  map: MapData | null;
  state: StateMessage | null;
  end: EndMessage | null;
  connected: boolean;
  inputActive: boolean;
}

export function createView(): SessionView {
  return { map: null, state: null, end: null, connected: false, inputActive: false };
}

/** Folds one server message into the view.
 *
 * A map message opens a fresh session (reconnects get a new one server
 * side), so it clears stale state. State messages only ever advance: a
 * frame whose tick does not exceed the rendered one is dropped, so the
 * drawn path never moves backward within a session.
 */
export function applyServerMessage(view: SessionView, msg: ServerMessage): void {
  switch (msg.type) {
    case "map":
      view.map = decodeMap(msg);
      view.state = null;
      view.end = null;
      break;
    case "state":
      if (view.state === null || msg.tick > view.state.tick) view.state = msg;
      break;
    case "end":
      view.end = msg;
      break;
  }
}
