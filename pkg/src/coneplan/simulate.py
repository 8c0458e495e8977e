"""Closed-loop episode engine.

Runs the dual-rate loop: every delta seconds the operator command is
read, the pose history updated, and a motion command issued (gated
pass-through, blend, or path tracking); every decision period the
replanning policy is consulted. Episodes emit a newline-delimited JSON
trace; every metric is a pure function of that trace, so a serialized
trace reproduces the logged numbers exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .control import (
    BLEND,
    DIRECT,
    DwaConfig,
    NoAdmissibleCommand,
    VelocityCommand,
    feasibility_gate,
    rollout,
    shared_dwa,
    track_path,
    wrap_angle,
)
from .intent import HistoryBuffer
from .nets import PolicyBundle
from .ppo import policy_heads
from .replan import PlannedPath, PlanningError, plan_path, replanning_step
from .rl_env import HISTORY_LEN, PATH_HORIZON, encode_state, squash_params
from .worldmap import (
    DistanceField,
    OccupancyGrid,
    Pose,
    distance_field,
    generate_random_world,
)

SCRIPTED_HUMAN = "scripted_human"
LIVE_HUMAN = "live_human"
BASELINE_CONTINUOUS = "baseline_continuous"
SHARED_DWA_ONLY = "shared_dwa_only"
MODES = (SCRIPTED_HUMAN, LIVE_HUMAN, BASELINE_CONTINUOUS, SHARED_DWA_ONLY)


@dataclass
class EpisodeConfig:
    """Everything one episode needs besides the live input source."""

    world: OccupancyGrid | int
    start: tuple
    goal: tuple
    delta: float = 0.1
    decision_period: float = 0.5
    mode: str = SCRIPTED_HUMAN
    policy: PolicyBundle | None = None
    human_trajectory: np.ndarray | None = None
    controller: DwaConfig = field(default_factory=DwaConfig)
    robot_radius: float = 0.15
    goal_tolerance: float = 0.2
    timeout: float | None = None
    path_spacing: float = 0.1
    buffer_capacity: int = HISTORY_LEN
    buffer_spacing: float = 0.1
    axis_window: int = 5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.delta <= 0.0 or self.decision_period <= 0.0:
            raise ValueError("delta and decision_period must be positive")
        ratio = self.decision_period / self.delta
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("decision_period must be an integer multiple of delta")
        if self.mode == SCRIPTED_HUMAN and self.human_trajectory is None:
            raise ValueError("scripted mode needs a human trajectory")


class ScriptedTracker:
    """Pursuit operator re-tracing a reference trajectory sample by sample.

    Each tick it aims the exact constant-twist arc that lands on the next
    unreached reference point within one tick (a distance-lookahead
    pursuit cuts the trajectories' pivot corners by far more than the
    0.05 m re-trace budget). The index is monotone since references may
    loop, making nearest-point search ambiguous. Commands are clipped to
    the kinematic limits, so after a disturbance the tracker chases the
    pending sample until it catches up. Goes silent at the final point.
    """

    def __init__(self, points, cfg: DwaConfig, arrive_tol=0.03):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or len(self.points) < 2:
            raise ValueError("reference trajectory needs at least two points")
        self.cfg = cfg
        self.arrive_tol = float(arrive_tol)
        self.idx = 0
        self.done = False

    def command(self, pose: Pose, delta: float = 0.1) -> VelocityCommand | None:
        if self.done:
            return None
        last = len(self.points) - 1
        xy = np.asarray(pose.xy)
        while self.idx < last and np.hypot(*(self.points[self.idx] - xy)) <= self.arrive_tol:
            self.idx += 1
        target = self.points[self.idx]
        if self.idx == last and np.hypot(*(target - xy)) <= self.arrive_tol:
            self.done = True
            return None

        dx = target[0] - pose.x
        dy = target[1] - pose.y
        cos_t, sin_t = math.cos(pose.theta), math.sin(pose.theta)
        dxl = cos_t * dx + sin_t * dy
        dyl = -sin_t * dx + cos_t * dy
        alpha = math.atan2(dyl, dxl)
        if abs(alpha) > math.pi / 2:
            # target behind: pivot toward it
            omega = max(-self.cfg.omega_max, min(self.cfg.omega_max, 2.0 * alpha / delta))
            return VelocityCommand(0.0, omega)
        chord = math.hypot(dxl, dyl)
        # chord geometry: heading change over the arc is 2*alpha
        arc = chord if abs(alpha) < 1e-9 else chord * alpha / math.sin(alpha)
        v = arc / delta
        omega = 2.0 * alpha / delta
        # when limits bind, shrink v and omega together so the commanded
        # arc keeps its curvature; the robot lands short but on the circle
        scale = 1.0
        if v > self.cfg.v_max:
            scale = self.cfg.v_max / v
        if abs(omega) > self.cfg.omega_max:
            scale = min(scale, self.cfg.omega_max / abs(omega))
        return VelocityCommand(v * scale, omega * scale)


@dataclass
class Trace:
    """Chronological episode record stream.

    records[0] is the header, the final record the end trailer; tick and
    path records sit in between in emission order.
    """

    records: list

    @property
    def header(self) -> dict:
        return self.records[0]

    @property
    def ticks(self) -> list:
        return [r for r in self.records if r["record"] == "tick"]

    @property
    def paths(self) -> dict:
        return {
            r["version"]: np.asarray(r["points"], dtype=float)
            for r in self.records
            if r["record"] == "path"
        }

    @property
    def trailer(self) -> dict:
        last = self.records[-1]
        if last["record"] != "end":
            raise ValueError("trace has no end trailer")
        return last


def dump_trace(trace: Trace, path) -> None:
    with open(path, "w") as fh:
        for rec in trace.records:
            fh.write(json.dumps(rec) + "\n")


def load_trace(path) -> Trace:
    with open(path) as fh:
        return Trace([json.loads(line) for line in fh if line.strip()])


def _cmd_json(cmd: VelocityCommand | None):
    return None if cmd is None else [float(cmd.v), float(cmd.omega)]


def _engaged(cmd: VelocityCommand | None) -> bool:
    return cmd is not None and not (cmd.v == 0.0 and cmd.omega == 0.0)


class EpisodeRunner:
    """Steppable dual-rate simulation; one call to step() is one delta tick.

    A live input source is a callable tick -> VelocityCommand | None;
    None means no operator input this tick.
    """

    def __init__(self, cfg: EpisodeConfig, seed: int = 0, human_source=None):
        self.cfg = cfg
        self.seed = int(seed)
        self.grid = (
            cfg.world
            if isinstance(cfg.world, OccupancyGrid)
            else generate_random_world(seed=int(cfg.world))
        )
        self.dfield = distance_field(self.grid)
        self.goal = np.asarray(cfg.goal, dtype=float)

        start = np.asarray(cfg.start, dtype=float)
        if cfg.human_trajectory is not None:
            ref = np.asarray(cfg.human_trajectory, dtype=float)
            aim = ref[min(5, len(ref) - 1)]
        else:
            aim = self.goal
        heading = 0.0
        if np.hypot(*(aim - start)) > 1e-9:
            heading = math.atan2(aim[1] - start[1], aim[0] - start[0])
        self.pose = Pose(float(start[0]), float(start[1]), heading)

        self.tracker = None
        if cfg.human_trajectory is not None and cfg.mode != LIVE_HUMAN:
            self.tracker = ScriptedTracker(cfg.human_trajectory, cfg.controller)
        self.human_source = human_source
        if cfg.mode == LIVE_HUMAN and human_source is None:
            raise ValueError("live mode needs a human_source callable")

        self.buffer = HistoryBuffer(cfg.buffer_capacity, cfg.buffer_spacing)
        self.ticks_per_decision = int(round(cfg.decision_period / cfg.delta))
        dist = float(np.hypot(*(self.goal - start)))
        self.timeout = (
            cfg.timeout
            if cfg.timeout is not None
            else 4.0 * dist / cfg.controller.v_max
        )
        self.max_ticks = max(1, int(math.ceil(self.timeout / cfg.delta)))

        self.path: PlannedPath | None = None
        self.path_version: int | None = None
        self.records: list = []
        self.records.append(
            {
                "record": "header",
                "mode": cfg.mode,
                "seed": self.seed,
                "delta": cfg.delta,
                "decision_period": cfg.decision_period,
                "start": [float(start[0]), float(start[1])],
                "goal": [float(self.goal[0]), float(self.goal[1])],
                "goal_tolerance": cfg.goal_tolerance,
                "robot_radius": cfg.robot_radius,
                "timeout": self.timeout,
                "human_trajectory": (
                    None
                    if cfg.human_trajectory is None
                    else np.asarray(cfg.human_trajectory, dtype=float).tolist()
                ),
            }
        )
        if cfg.mode != SHARED_DWA_ONLY:
            initial = plan_path(
                self.dfield, start, self.goal, cfg.robot_radius, cfg.path_spacing
            )
            self._adopt_path(initial)

        self.current = VelocityCommand(0.0, 0.0)
        self.last_a = 0
        self.tick = 0
        self.done = False
        self.success = False
        # most recent triggered replan, kept for live monitors
        self.last_domain = None
        self.last_subgoal = None

    def _adopt_path(self, path: PlannedPath) -> None:
        self.path = path
        self.path_version = 0 if self.path_version is None else self.path_version + 1
        self.records.append(
            {
                "record": "path",
                "version": self.path_version,
                "points": path.points.tolist(),
            }
        )

    def _human_command(self) -> VelocityCommand | None:
        if self.tracker is not None:
            return self.tracker.command(self.pose, self.cfg.delta)
        if self.human_source is not None:
            return self.human_source(self.tick)
        return None

    def _decide(self) -> dict:
        """One decision-period consultation of the planner."""
        cfg = self.cfg
        if cfg.mode == BASELINE_CONTINUOUS:
            # continuous replanning: trigger unconditionally, no domain
            rec = {"a": 1, "h": None, "r": None, "valid": True}
            try:
                new = plan_path(
                    self.dfield, self.pose.xy, self.goal, cfg.robot_radius, cfg.path_spacing
                )
            except PlanningError as err:
                rec["valid"] = False
                rec["failure"] = str(err)
            else:
                self._adopt_path(new)
            return rec

        if cfg.policy is None or not self.buffer.full:
            self.last_a = 0
            return {"a": 0, "h": None, "r": None, "valid": True}

        obs = encode_state(
            self.grid, self.goal, self.pose, self.buffer, self.path, self.last_a
        ).as_vector()
        logits, mean, _, _ = policy_heads(cfg.policy, obs[None])
        a = int(np.argmax(logits[0]))
        if a == 0:
            self.last_a = 0
            return {"a": 0, "h": None, "r": None, "valid": True}

        h, r = squash_params(float(mean[0, 0]), float(mean[0, 1]))
        out = replanning_step(
            self.dfield,
            self.pose,
            self.buffer,
            self.path,
            self.goal,
            (1, h, r),
            cfg.robot_radius,
            m=cfg.axis_window,
            spacing=cfg.path_spacing,
        )
        rec = {"a": 1, "h": h, "r": r, "valid": out.triggered}
        if out.triggered:
            self._adopt_path(out.path)
            self.last_domain = out.domain
            self.last_subgoal = out.subgoal
            self.last_a = 1
        else:
            rec["failure"] = out.failure
            self.last_a = 0
        return rec

    def _motion_command(self, human_cmd, engaged: bool) -> VelocityCommand:
        cfg = self.cfg
        try:
            if engaged:
                gate = feasibility_gate(self.pose, human_cmd, self.dfield, cfg.controller)
                if gate == DIRECT:
                    return human_cmd
                return shared_dwa(
                    self.pose, human_cmd, self.dfield, cfg.controller, self.current
                )
            if cfg.mode == SHARED_DWA_ONLY or self.path is None:
                return VelocityCommand(0.0, 0.0)
            return track_path(self.pose, self.path, self.dfield, cfg.controller, self.current)
        except NoAdmissibleCommand:
            return VelocityCommand(0.0, 0.0)

    def _finish(self, success: bool) -> None:
        self.done = True
        self.success = success
        self.records.append(
            {
                "record": "end",
                "success": success,
                "ticks": self.tick,
                "final_pose": [self.pose.x, self.pose.y, self.pose.theta],
            }
        )

    def step(self) -> dict | None:
        """Advance one delta tick; returns the tick record, None when done."""
        if self.done:
            return None
        if np.hypot(*(self.goal - np.asarray(self.pose.xy))) <= self.cfg.goal_tolerance:
            self._finish(True)
            return None
        if self.tick >= self.max_ticks:
            self._finish(False)
            return None

        human_cmd = self._human_command()
        engaged = _engaged(human_cmd)
        if engaged:
            self.buffer.push(self.pose.xy)
        else:
            self.buffer.clear()

        decision = None
        if (
            self.tick % self.ticks_per_decision == 0
            and self.cfg.mode != SHARED_DWA_ONLY
        ):
            decision = self._decide()

        robot_cmd = self._motion_command(human_cmd, engaged)
        record = {
            "record": "tick",
            "tick": self.tick,
            "pose": [self.pose.x, self.pose.y, self.pose.theta],
            "human_cmd": _cmd_json(human_cmd),
            "robot_cmd": _cmd_json(robot_cmd),
            "buffer_len": len(self.buffer),
            "clearance": float(self.dfield.at(self.pose.xy)),
            "path_version": self.path_version,
        }
        if decision is not None:
            record["decision"] = decision
        self.records.append(record)

        self.pose = rollout(self.pose, robot_cmd, self.cfg.delta, self.cfg.delta)[-1]
        self.current = robot_cmd
        self.tick += 1
        return record

    @property
    def trace(self) -> Trace:
        return Trace(list(self.records))

    def run(self):
        while self.step() is not None:
            pass
        trace = self.trace
        return compute_metrics(trace), trace


def run_episode(cfg: EpisodeConfig, seed: int = 0, human_source=None):
    """Run one full episode; returns (EpisodeMetrics, Trace)."""
    return EpisodeRunner(cfg, seed=seed, human_source=human_source).run()


@dataclass
class EpisodeMetrics:
    e_med: float
    trigger_freq: float
    mean_opening_deg: float
    t_total: float
    interaction_percent: float
    d_clear: float
    trigger_positions: np.ndarray
    success: bool
    decision_steps: int
    triggers: int


def _tick_engaged(rec: dict) -> bool:
    cmd = rec["human_cmd"]
    return cmd is not None and not (cmd[0] == 0.0 and cmd[1] == 0.0)


def compute_e_med(trace: Trace, horizon: int = PATH_HORIZON) -> float:
    """Mean distance between the planned path and the operator's desired one.

    At each decision tick both paths are anchored at their points nearest
    the robot, walked forward `horizon` points (clamping at the ends) and
    the pointwise distances averaged; the result averages over ticks.
    """
    human = trace.header["human_trajectory"]
    if human is None:
        return float("nan")
    human = np.asarray(human, dtype=float)
    paths = trace.paths
    ticks_per_decision = int(round(trace.header["decision_period"] / trace.header["delta"]))

    means = []
    for rec in trace.ticks:
        if rec["tick"] % ticks_per_decision != 0 or rec["path_version"] is None:
            continue
        path = paths[rec["path_version"]]
        p = np.asarray(rec["pose"][:2], dtype=float)
        k_r = int(np.argmin(np.linalg.norm(path - p, axis=1)))
        k_h = int(np.argmin(np.linalg.norm(human - p, axis=1)))
        total = 0.0
        for j in range(horizon):
            a = path[min(k_r + j, len(path) - 1)]
            b = human[min(k_h + j, len(human) - 1)]
            total += float(np.hypot(a[0] - b[0], a[1] - b[1]))
        means.append(total / horizon)
    if not means:
        return float("nan")
    return float(np.mean(means))


def _decision_records(trace: Trace):
    for rec in trace.ticks:
        if "decision" in rec:
            yield rec


def compute_trigger_stats(trace: Trace):
    """Returns (decision_steps, triggers, trigger_freq, mean_opening_deg, positions)."""
    decisions = 0
    triggers = 0
    openings = []
    positions = []
    for rec in _decision_records(trace):
        decisions += 1
        d = rec["decision"]
        if d["a"] == 1 and d["valid"]:
            triggers += 1
            positions.append(rec["pose"][:2])
            if d["h"] is not None and d["r"] is not None:
                openings.append(math.degrees(2.0 * math.atan2(d["r"], d["h"])))
    freq = triggers / decisions if decisions else 0.0
    mean_open = float(np.mean(openings)) if openings else float("nan")
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    return decisions, triggers, float(freq), mean_open, pos


def compute_human_metrics(trace: Trace) -> dict:
    """T_total, interaction ratio, and mean obstacle distance from a trace."""
    ticks = trace.ticks
    n = len(ticks)
    delta = trace.header["delta"]
    t_total = trace.trailer["ticks"] * delta
    rho = sum(1 for r in ticks if _tick_engaged(r)) / n if n else 0.0
    d_clear = float(np.mean([r["clearance"] for r in ticks])) if n else float("nan")
    return {"t_total": float(t_total), "rho": float(rho), "d_clear": d_clear}


def compute_metrics(trace: Trace) -> EpisodeMetrics:
    decisions, triggers, freq, mean_open, positions = compute_trigger_stats(trace)
    human = compute_human_metrics(trace)
    return EpisodeMetrics(
        e_med=compute_e_med(trace),
        trigger_freq=freq,
        mean_opening_deg=mean_open,
        t_total=human["t_total"],
        interaction_percent=human["rho"],
        d_clear=human["d_clear"],
        trigger_positions=positions,
        success=bool(trace.trailer["success"]),
        decision_steps=decisions,
        triggers=triggers,
    )


def heatmap_bins(grid: OccupancyGrid, bin_size: float):
    """Histogram bin edges tiling the grid extent."""
    if bin_size <= 0.0:
        raise ValueError("bin_size must be positive")
    x0, y0 = grid.origin
    width = grid.width_cells * grid.resolution
    height = grid.height_cells * grid.resolution
    nx = max(1, int(math.ceil(width / bin_size)))
    ny = max(1, int(math.ceil(height / bin_size)))
    return x0 + bin_size * np.arange(nx + 1), y0 + bin_size * np.arange(ny + 1)


def trigger_heatmap(traces, grid: OccupancyGrid, bin_size: float) -> np.ndarray:
    """Replanning-trigger location histogram, row-major over y like the grid."""
    x_edges, y_edges = heatmap_bins(grid, bin_size)
    hist = np.zeros((len(y_edges) - 1, len(x_edges) - 1), dtype=int)
    for trace in traces:
        _, _, _, _, positions = compute_trigger_stats(trace)
        if len(positions) == 0:
            continue
        h, _, _ = np.histogram2d(
            positions[:, 0], positions[:, 1], bins=[x_edges, y_edges]
        )
        hist += h.T.astype(int)
    return hist
