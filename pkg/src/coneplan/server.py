"""Websocket teleoperation service: one live shared-control session per socket.

Each connection gets its own simulator stepped in (paced) real time on the
event loop. Operator input lands in a single-slot mailbox that the simulator
reads once per delta tick, so the stepping loop never blocks on the network.
"""

from __future__ import annotations

import asyncio
import contextlib
import itertools
import socket
from pathlib import Path

import uvicorn
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles

from .cli import PortInUseError
from .config import RunConfig
from .control import VelocityCommand
from .simulate import (
    LIVE_HUMAN,
    EpisodeConfig,
    EpisodeRunner,
    _tick_engaged,
    dump_trace,
)
from .worldmap import OccupancyGrid, grid_to_dict

# wall-clock ceiling for a live episode when the config leaves timeout unset;
# the scripted default (4x straight-line time) is far too tight for a human
LIVE_TIMEOUT = 600.0

_PLACEHOLDER = """<!doctype html>
<html><head><title>teleop</title></head>
<body>
<p>No UI bundle found. Connect a websocket client to <code>/ws</code>.</p>
</body></html>
"""


class CommandMailbox:
    """Single-slot latest-value channel between the socket and the simulator.

    post() overwrites the slot; read() consumes it. A tick therefore sees an
    operator command only if one arrived since the previous tick, which is
    what makes the engagement ratio honest: a client streaming at 20 Hz keeps
    every 10 Hz tick engaged, and a stopped stream disengages within one tick
    instead of replaying its last packet forever.
    """

    def __init__(self):
        self._cmd: VelocityCommand | None = None
        self._last_seq = -1

    def post(self, v: float, omega: float, seq: int) -> None:
        if seq <= self._last_seq:
            return  # reordered or replayed packet
        self._last_seq = seq
        self._cmd = VelocityCommand(float(v), float(omega))

    def handover(self) -> None:
        self._cmd = None

    def read(self, tick: int) -> VelocityCommand | None:
        cmd = self._cmd
        self._cmd = None
        return cmd


class LiveSession:
    """One connected operator: a simulator, its mailbox, and running metrics."""

    def __init__(
        self,
        sid: int,
        grid: OccupancyGrid,
        start,
        goal,
        cfg: RunConfig,
        policy=None,
    ):
        self.sid = sid
        self.mailbox = CommandMailbox()
        ep = cfg.episode
        self.runner = EpisodeRunner(
            EpisodeConfig(
                world=grid,
                start=tuple(start),
                goal=tuple(goal),
                delta=ep.delta,
                decision_period=ep.decision_period,
                mode=LIVE_HUMAN,
                policy=policy,
                controller=cfg.controller,
                robot_radius=cfg.world.robot_radius,
                goal_tolerance=ep.goal_tolerance,
                timeout=ep.timeout if ep.timeout is not None else LIVE_TIMEOUT,
                path_spacing=ep.path_spacing,
                buffer_capacity=ep.buffer_capacity,
                buffer_spacing=ep.buffer_spacing,
                axis_window=ep.axis_window,
            ),
            seed=sid,
            human_source=self.mailbox.read,
        )
        self.domain: dict | None = None
        self.subgoals: list[list[float]] = []
        self.ticks = 0
        self.engaged = 0
        self.clearance_sum = 0.0
        self.decisions = 0
        self.triggers = 0

    def post_command(self, v: float, omega: float, seq: int) -> None:
        self.mailbox.post(v, omega, seq)

    def absorb(self, rec: dict) -> None:
        """Fold one tick record into the running metrics."""
        self.ticks += 1
        if _tick_engaged(rec):
            self.engaged += 1
        self.clearance_sum += rec["clearance"]
        decision = rec.get("decision")
        if decision is None:
            return
        self.decisions += 1
        if decision["a"] == 1 and decision["valid"]:
            self.triggers += 1
            if self.runner.last_domain is not None:
                self.domain = self.runner.last_domain.to_dict()
            if self.runner.last_subgoal is not None:
                self.subgoals.append(
                    [float(x) for x in self.runner.last_subgoal]
                )
        else:
            # the cone is consumed by its replan; stop drawing it once the
            # next decision declines to trigger
            self.domain = None

    def metrics(self) -> dict:
        rho = self.engaged / self.ticks if self.ticks else 0.0
        d_clear = self.clearance_sum / self.ticks if self.ticks else None
        return {
            "t_total": self.runner.tick * self.runner.cfg.delta,
            "rho": rho,
            "d_clear": d_clear,
            "decisions": self.decisions,
            "triggers": self.triggers,
        }

    def state_message(self) -> dict:
        runner = self.runner
        path = runner.path.points.tolist() if runner.path is not None else []
        return {
            "type": "state",
            "tick": runner.tick,
            "pose": [runner.pose.x, runner.pose.y, runner.pose.theta],
            "path": path,
            "domain": self.domain,
            "goal": [float(runner.goal[0]), float(runner.goal[1])],
            "subgoals": list(self.subgoals),
            "metrics": self.metrics(),
        }

    def finalize(self):
        """Close the trace, marking an aborted episode, and return it."""
        if not self.runner.done:
            self.runner._finish(False)
            self.runner.records[-1]["aborted"] = True
        return self.runner.trace


def _default_static_dir() -> Path | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


async def _pump_input(ws: WebSocket, session: LiveSession) -> None:
    """Drain the socket into the mailbox until the client goes away."""
    while True:
        try:
            msg = await ws.receive_json()
        except WebSocketDisconnect:
            return
        except ValueError:
            continue  # malformed frame, drop it
        except RuntimeError:
            return  # socket already torn down
        kind = msg.get("type") if isinstance(msg, dict) else None
        if kind == "cmd":
            try:
                session.post_command(
                    float(msg["v"]), float(msg["omega"]), int(msg["seq"])
                )
            except (KeyError, TypeError, ValueError):
                continue
        elif kind == "handover":
            session.mailbox.handover()
        # anything else is deliberately ignored


def create_app(
    grid: OccupancyGrid,
    start,
    goal,
    cfg: RunConfig,
    *,
    policy=None,
    trace_dir=None,
    static_dir=None,
    pace: float = 1.0,
) -> FastAPI:
    """Build the session service; pace scales the real-time tick sleep."""
    app = FastAPI()
    counter = itertools.count()
    map_message = {
        "type": "map",
        **grid_to_dict(grid),
        "start": [float(start[0]), float(start[1])],
        "goal": [float(goal[0]), float(goal[1])],
        "robot_radius": cfg.world.robot_radius,
    }
    delay = cfg.episode.delta * pace

    @app.websocket("/ws")
    async def ws_session(ws: WebSocket):
        await ws.accept()
        sid = next(counter)
        session = LiveSession(sid, grid, start, goal, cfg, policy=policy)
        pump = asyncio.create_task(_pump_input(ws, session))
        try:
            await ws.send_json(map_message)
            while True:
                rec = session.runner.step()
                if rec is None:
                    break
                session.absorb(rec)
                await ws.send_json(session.state_message())
                if pump.done():
                    break  # client went away; stop simulating
                await asyncio.sleep(delay)
            if session.runner.done:
                await ws.send_json(
                    {
                        "type": "end",
                        "success": session.runner.success,
                        "metrics": session.metrics(),
                    }
                )
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            pump.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await pump
            trace = session.finalize()
            if trace_dir is not None:
                out = Path(trace_dir)
                out.mkdir(parents=True, exist_ok=True)
                dump_trace(trace, out / f"trace_{sid:03d}.ndjson")
            with contextlib.suppress(Exception):
                await ws.close()

    resolved = static_dir if static_dir is not None else _default_static_dir()
    if resolved is not None and Path(resolved).is_dir():
        app.mount("/", StaticFiles(directory=resolved, html=True), name="ui")
    else:

        @app.get("/")
        async def index():
            return HTMLResponse(_PLACEHOLDER)

    return app


def serve(
    grid: OccupancyGrid,
    start,
    goal,
    cfg: RunConfig,
    *,
    policy=None,
    host: str = "127.0.0.1",
    port: int = 8000,
    trace_dir=None,
    static_dir=None,
    pace: float = 1.0,
) -> None:
    """Bind-check the port, then run the session service until interrupted."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError as err:
        raise PortInUseError(f"cannot bind {host}:{port}: {err}") from err
    finally:
        probe.close()
    app = create_app(
        grid,
        start,
        goal,
        cfg,
        policy=policy,
        trace_dir=trace_dir,
        static_dir=static_dir,
        pace=pace,
    )
    uvicorn.run(app, host=host, port=port, log_level="warning", access_log=False)
