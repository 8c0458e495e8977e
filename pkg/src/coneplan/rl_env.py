"""Decision process around intention-domain replanning.

A scripted robot is dragged along a reference trajectory at a fixed
decision period. At each decision the policy may keep its planned path
or trigger a cone-constrained replan; rewards score how well the plan
hugs the upcoming reference, whether the episode terminated, and how
wide the predicted cone opened.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .intent import HistoryBuffer
from .replan import PlannedPath, plan_path, replanning_step
from .worldmap import (
    DistanceField,
    OccupancyGrid,
    Pose,
    distance_field,
    egocentric_crop,
    to_local_frame,
)

CROP_WIDTH = 5.0
POOL_CELLS = 32
PATH_HORIZON = 100
HISTORY_LEN = 20

H_MIN = 0.5
H_MAX = CROP_WIDTH / 2.0
PHI_CAP = math.radians(80.0)

OBS_DIM = POOL_CELLS * POOL_CELLS + 2 + 2 * PATH_HORIZON + 2 * HISTORY_LEN + 2


@dataclass(frozen=True)
class RewardConfig:
    """Weights and shapes of the composite reward."""

    w1: float = 2.0
    w2: float = 10.0
    eta: float = 1.0
    lam: float = 0.98
    beta: float = 2.0
    horizon: int = PATH_HORIZON


@dataclass(frozen=True)
class MdpAction:
    """Meta action: keep the path (a=0) or replan with cone params."""

    a: int
    h: float | None = None
    r: float | None = None

    def __post_init__(self):
        if self.a not in (0, 1):
            raise ValueError("a must be 0 or 1")
        if self.a == 1 and (self.h is None or self.r is None):
            raise ValueError("replan action requires h and r")
        if self.a == 0 and (self.h is not None or self.r is not None):
            raise ValueError("keep action carries no params")


def squash_params(raw_h: float, raw_r: float) -> tuple[float, float]:
    """Map raw head outputs onto feasible cone dimensions.

    h lands in (H_MIN, H_MAX); r in (0, h tan 80 deg), so the half-angle
    stays under 80 degrees for any input.
    """
    h = H_MIN + (H_MAX - H_MIN) * (math.tanh(raw_h) + 1.0) / 2.0
    r = h * math.tan(PHI_CAP) * (math.tanh(raw_r) + 1.0) / 2.0
    return h, r


def max_pool_mask(mask: np.ndarray, out: int) -> np.ndarray:
    """Adaptive 2-D max pool of a boolean mask to (out, out)."""
    pooled = mask
    for axis in (0, 1):
        n = pooled.shape[axis]
        starts = (np.arange(out) * n) // out
        ends = np.ceil((np.arange(out) + 1) * n / out).astype(int)
        span = int((ends - starts).max())
        idx = np.minimum(starts[:, None] + np.arange(span)[None, :], ends[:, None] - 1)
        pooled = np.moveaxis(np.moveaxis(pooled, axis, 0)[idx].any(axis=1), 0, axis)
    return pooled


@dataclass
class MdpState:
    """Structured observation; `as_vector` is the network input layout."""

    local_map: np.ndarray  # (POOL_CELLS, POOL_CELLS) bool
    goal_local: np.ndarray  # (2,)
    path_segment: np.ndarray  # (PATH_HORIZON, 2) local frame
    history: np.ndarray  # (HISTORY_LEN, 2) local frame
    last_action: int

    def as_vector(self) -> np.ndarray:
        onehot = np.zeros(2, dtype=np.float32)
        onehot[self.last_action] = 1.0
        return np.concatenate(
            [
                self.local_map.astype(np.float32).ravel(),
                self.goal_local.astype(np.float32),
                self.path_segment.astype(np.float32).ravel(),
                self.history.astype(np.float32).ravel(),
                onehot,
            ]
        )


def encode_state(
    grid: OccupancyGrid,
    goal,
    pose: Pose,
    buffer: HistoryBuffer,
    path: PlannedPath,
    last_a: int,
    *,
    crop_width: float = CROP_WIDTH,
    pool: int = POOL_CELLS,
    horizon: int = PATH_HORIZON,
) -> MdpState:
    """Assemble the observation around the robot's current pose.

    The map patch is an axis-aligned crop; goal, upcoming path segment
    (from the path point nearest the robot, goal-padded) and the history
    buffer are rotated into the robot frame.
    """
    if not buffer.full:
        raise ValueError("history buffer must be full before encoding")
    crop = egocentric_crop(grid, pose.xy, crop_width)
    local_map = max_pool_mask(crop.cells, pool)

    goal_local = to_local_frame(pose, [goal])[0]

    k = path.nearest_index(pose.xy)
    seg = path.points[k : k + horizon]
    if len(seg) < horizon:
        pad = np.repeat(path.points[-1][None, :], horizon - len(seg), axis=0)
        seg = np.vstack([seg, pad])
    path_segment = to_local_frame(pose, seg)

    history = to_local_frame(pose, buffer.points())
    return MdpState(local_map, goal_local, path_segment, history, int(last_a))


def task_reward(robot_path, human_traj, pose, cfg: RewardConfig) -> float:
    """Geometrically discounted agreement between plan and reference.

    Both sequences are anchored at their point nearest the robot, then
    compared pairwise over the horizon; indices past either end clamp to
    the final point. Each term is exp(-eta * distance); weights are the
    normalized geometric series, so the result lives in (0, 1].
    """
    pr = np.asarray(robot_path, dtype=float).reshape(-1, 2)
    ph = np.asarray(human_traj, dtype=float).reshape(-1, 2)
    p = np.asarray(pose.xy if isinstance(pose, Pose) else pose, dtype=float)
    kr = int(np.argmin(np.hypot(*(pr - p).T)))
    kh = int(np.argmin(np.hypot(*(ph - p).T)))
    j = np.arange(1, cfg.horizon + 1)
    ir = np.minimum(kr + j, len(pr) - 1)
    ih = np.minimum(kh + j, len(ph) - 1)
    dist = np.hypot(*(pr[ir] - ph[ih]).T)
    weights = (1.0 - cfg.lam) / (1.0 - cfg.lam**cfg.horizon) * cfg.lam ** (j - 1)
    return float(np.sum(weights * np.exp(-cfg.eta * dist)))


GOAL_REACHED = "goal_reached"
INVALID_DOMAIN = "invalid_domain"


def terminal_reward(event: str | None) -> float:
    """+1 on reaching the goal, -1 on an unusable domain, else 0."""
    if event == GOAL_REACHED:
        return 1.0
    if event == INVALID_DOMAIN:
        return -1.0
    if event is None:
        return 0.0
    raise ValueError(f"unknown terminal event {event!r}")


def regularization_reward(phi_norm: float, beta: float, w2: float = 10.0) -> float:
    """Log-barrier penalty on the normalized cone half-angle.

    Zero at a closed cone, diverging as phi_norm -> 1; the divergence is
    floored at -w2 so one step can never outweigh a terminal failure.
    """
    if not 0.0 <= phi_norm < 1.0:
        raise ValueError("phi_norm must lie in [0, 1)")
    if phi_norm == 0.0:
        return 0.0
    value = beta * math.log(1.0 - phi_norm) / (1.0 - phi_norm)
    return max(value, -w2)


class TrainingEnv:
    """Slaved-robot episode over one world and one reference trajectory.

    The robot's position replays the reference; the policy only shapes
    the planned path. A failed replan (unusable domain or no in-cone
    route) halts the robot: the state repeats bit-exactly, the step
    costs a terminal penalty, and the budget keeps counting.
    """

    def __init__(
        self,
        grid: OccupancyGrid,
        trajectory_points: np.ndarray,
        goal,
        reward_cfg: RewardConfig,
        *,
        robot_radius: float = 0.15,
        decision_period: float = 0.5,
        sample_dt: float = 0.1,
        buffer_spacing: float = 0.1,
        path_spacing: float = 0.1,
        axis_window: int = 5,
        budget: int | None = None,
        v_max: float = 0.5,
    ):
        self.grid = grid
        self.dfield: DistanceField = distance_field(grid)
        self.traj = np.asarray(trajectory_points, dtype=float)
        self.goal = np.asarray(goal, dtype=float)
        self.cfg = reward_cfg
        self.robot_radius = robot_radius
        self.axis_window = axis_window
        self.path_spacing = path_spacing
        self.n_advance = max(1, int(round(decision_period / sample_dt)))
        if budget is None:
            side = max(
                grid.width_cells * grid.resolution,
                grid.height_cells * grid.resolution,
            )
            duration = (len(self.traj) - 1) * sample_dt
            budget = int(
                max(
                    4.0 * side / (v_max * decision_period),
                    2.0 * math.ceil(duration / decision_period),
                )
            )
        self.budget = budget

        self.buffer = HistoryBuffer(HISTORY_LEN, buffer_spacing)
        self.idx = 0
        self._heading = self._initial_heading()
        self.buffer.push(self.traj[0])
        self.path = plan_path(
            self.dfield, self.traj[0], self.goal, robot_radius, path_spacing
        )
        self.last_a = 0
        self.steps = 0
        self.done = False
        self._warmup()
        self._obs = None if self.done else self._encode()

    def _initial_heading(self) -> float:
        for k in range(len(self.traj) - 1):
            d = self.traj[k + 1] - self.traj[k]
            if np.hypot(*d) > 1e-9:
                return math.atan2(d[1], d[0])
        return 0.0

    @property
    def pose(self) -> Pose:
        p = self.traj[self.idx]
        return Pose(float(p[0]), float(p[1]), self._heading)

    def _advance_samples(self) -> None:
        stop = min(self.idx + self.n_advance, len(self.traj) - 1)
        while self.idx < stop:
            prev = self.traj[self.idx]
            self.idx += 1
            d = self.traj[self.idx] - prev
            if np.hypot(*d) > 1e-9:
                self._heading = math.atan2(d[1], d[0])
            self.buffer.push(self.traj[self.idx])
        if self.idx >= len(self.traj) - 1:
            self.done = True

    def _warmup(self) -> None:
        # T-sized advances until the history fills; no transitions emitted
        while not self.buffer.full and not self.done:
            self._advance_samples()
        if not self.buffer.full:
            self.done = True

    def _encode(self) -> np.ndarray:
        return encode_state(
            self.grid, self.goal, self.pose, self.buffer, self.path, self.last_a
        ).as_vector()

    def observe(self) -> np.ndarray:
        if self._obs is None:
            raise RuntimeError("episode ended before the first observation")
        return self._obs

    def step(self, action: MdpAction):
        """Apply one decision; returns (obs, reward, done, info)."""
        if self.done:
            raise RuntimeError("episode is over")
        self.steps += 1
        phi = None
        r_reg = 0.0
        event = None
        triggered = False
        failure = None

        if action.a == 1:
            outcome = replanning_step(
                self.dfield,
                self.pose,
                self.buffer,
                self.path,
                self.goal,
                (1, action.h, action.r),
                self.robot_radius,
                m=self.axis_window,
                spacing=self.path_spacing,
            )
            phi = math.atan2(action.r, action.h)
            r_reg = regularization_reward(
                phi / (math.pi / 2.0), self.cfg.beta, self.cfg.w2
            )
            if outcome.failure is not None:
                # halt: position, buffer, path and observation all repeat
                failure = outcome.failure
                event = INVALID_DOMAIN
                r_task = task_reward(self.path.points, self.traj, self.pose, self.cfg)
                r_term = terminal_reward(event)
                reward = self.cfg.w1 * r_task + self.cfg.w2 * r_term + r_reg
                if self.steps >= self.budget:
                    self.done = True
                info = {
                    "r_task": r_task,
                    "r_terminal": r_term,
                    "r_reg": r_reg,
                    "triggered": False,
                    "failure": failure,
                    "phi": phi,
                    "halted": True,
                }
                return self._obs, reward, self.done, info
            self.path = outcome.path
            self.last_a = 1
            triggered = True
        else:
            self.last_a = 0

        self._advance_samples()
        if self.idx >= len(self.traj) - 1:
            event = GOAL_REACHED
            self.done = True
        elif self.steps >= self.budget:
            self.done = True

        r_task = task_reward(self.path.points, self.traj, self.pose, self.cfg)
        r_term = terminal_reward(event)
        reward = self.cfg.w1 * r_task + self.cfg.w2 * r_term + r_reg
        self._obs = self._encode()
        info = {
            "r_task": r_task,
            "r_terminal": r_term,
            "r_reg": r_reg,
            "triggered": triggered,
            "failure": failure,
            "phi": phi,
            "halted": False,
        }
        return self._obs, reward, self.done, info
