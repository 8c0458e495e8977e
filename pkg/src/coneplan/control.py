"""Shared dynamic-window control.

One controller serves two roles. With an operator command present it
either passes the command straight through (feasibility gate) or blends
it: every (v, omega) sample in the reachable window is rolled out, the
colliding ones are discarded, and the survivor that best trades terminal
clearance against curvature-and-speed agreement with the operator wins.
With no operator it tracks the planned path with a standard DWA cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .replan import PlannedPath
from .worldmap import DistanceField, Pose


class NoAdmissibleCommand(RuntimeError):
    """Every sampled command collides; the caller should stop the robot."""


@dataclass(frozen=True)
class VelocityCommand:
    """Unicycle input: forward speed and turn rate."""

    v: float
    omega: float


@dataclass(frozen=True)
class DwaConfig:
    v_max: float = 0.5
    omega_max: float = 1.5
    a_max: float = 1.0
    alpha_max: float = 3.0
    sim_horizon: float = 1.0
    v_samples: int = 11
    omega_samples: int = 21
    clearance_threshold: float = 0.3
    clearance_cap: float = 1.0
    robot_radius: float = 0.15
    v_floor: float = 0.05
    control_period: float = 0.1
    lookahead: float = 0.5
    goal_tolerance: float = 0.1

    def __post_init__(self):
        for name in (
            "v_max", "omega_max", "a_max", "alpha_max", "sim_horizon",
            "clearance_cap", "robot_radius", "v_floor", "control_period",
            "lookahead", "goal_tolerance",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.clearance_threshold < 0.0:
            raise ValueError("clearance_threshold must be non-negative")
        if self.v_samples < 3 or self.omega_samples < 3:
            raise ValueError("need at least 3 samples per axis")


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _arc_offsets(theta0, v, omega, ts):
    """Closed-form constant-twist displacement, broadcast over (v, omega) x ts."""
    straight = np.abs(omega) < 1e-12
    w = np.where(straight, 1.0, omega)
    th = theta0 + omega * ts
    dx = np.where(
        straight,
        v * ts * math.cos(theta0),
        v / w * (np.sin(th) - math.sin(theta0)),
    )
    dy = np.where(
        straight,
        v * ts * math.sin(theta0),
        -v / w * (np.cos(th) - math.cos(theta0)),
    )
    return dx, dy, th


def rollout(pose: Pose, cmd: VelocityCommand, horizon: float, dt: float) -> list[Pose]:
    """Exact unicycle arc under a constant command, sampled every dt.

    Includes the start pose; ends at the sample nearest the horizon.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = max(1, int(round(horizon / dt)))
    ts = dt * np.arange(n + 1)
    dx, dy, th = _arc_offsets(pose.theta, cmd.v, cmd.omega, ts)
    return [
        Pose(float(pose.x + xi), float(pose.y + yi), float(wrap_angle(ti)))
        for xi, yi, ti in zip(dx, dy, th)
    ]


def clearance_of(end, dfield: DistanceField, robot_radius: float, cap: float) -> float:
    """Terminal clearance mapped to [0, 1]: raw margin capped then scaled."""
    if cap <= 0.0:
        raise ValueError("cap must be positive")
    xy = end.xy if isinstance(end, Pose) else np.asarray(end, dtype=float)
    margin = dfield.at(xy) - robot_radius
    return float(np.clip(margin, 0.0, cap) / cap)


def eq11_cost(clearance, cost_cmd):
    """Blend cost: obstacle pressure dominates as clearance vanishes."""
    return 1.0 - clearance + clearance * cost_cmd


def _window(center: float, half: float, lo: float, hi: float, n: int) -> np.ndarray:
    a = max(lo, center - half)
    b = min(hi, center + half)
    if b < a:
        a = b = min(max(center, lo), hi)
    return np.linspace(a, b, n)


def _sample_rollouts(pose, vs, ws, dfield, cfg):
    """All window samples rolled out and clearance-checked at once.

    Returns flat (v, omega, theta_end, x_end, y_end, free mask, terminal
    clearance in [0,1]) arrays over the v x omega grid.
    """
    vg, wg = np.meshgrid(vs, ws, indexing="ij")
    v = vg.ravel()[:, None]
    w = wg.ravel()[:, None]
    n = max(1, int(round(cfg.sim_horizon / cfg.control_period)))
    ts = cfg.control_period * np.arange(1, n + 1)
    dx, dy, th = _arc_offsets(pose.theta, v, w, ts)
    pts = np.stack([pose.x + dx, pose.y + dy], axis=-1)
    d = dfield.at_many(pts.reshape(-1, 2)).reshape(len(v), n)
    free = (d > cfg.robot_radius).all(axis=1)
    clear = np.clip(d[:, -1] - cfg.robot_radius, 0.0, cfg.clearance_cap)
    clear = clear / cfg.clearance_cap
    return (
        v[:, 0],
        w[:, 0],
        th[:, -1],
        pose.x + dx[:, -1],
        pose.y + dy[:, -1],
        free,
        clear,
    )


def shared_dwa(
    pose: Pose,
    human_cmd: VelocityCommand,
    dfield: DistanceField,
    cfg: DwaConfig,
    current: VelocityCommand | None = None,
) -> VelocityCommand:
    """Safe command closest in spirit to the operator's.

    Samples the window reachable from `current` within one control
    period, discards colliding rollouts, and minimizes
    1 - Clearance + Clearance * (0.5 Heading + 0.5 Velocity) where
    Heading compares curvatures against the operator command and
    Velocity compares speeds. Cost ties go to the sample nearest the
    operator command in (v, omega).
    """
    if current is None:
        current = human_cmd
    # forward-only: a reverse sample with matched curvature costs a flat
    # 0.5 at full clearance and becomes a retreat attractor that deadlocks
    # corridor passages, so the window floors at v = 0
    vs = _window(current.v, cfg.a_max * cfg.control_period, 0.0, cfg.v_max, cfg.v_samples)
    ws = _window(
        current.omega, cfg.alpha_max * cfg.control_period,
        -cfg.omega_max, cfg.omega_max, cfg.omega_samples,
    )
    v, w, _, _, _, free, clear = _sample_rollouts(pose, vs, ws, dfield, cfg)
    if not free.any():
        raise NoAdmissibleCommand("no admissible command")

    kappa = w / np.maximum(np.abs(v), cfg.v_floor)
    kappa_h = human_cmd.omega / max(abs(human_cmd.v), cfg.v_floor)
    kappa_span = 2.0 * cfg.omega_max / cfg.v_floor
    heading = np.clip(np.abs(kappa - kappa_h) / kappa_span, 0.0, 1.0)
    velocity = np.clip(np.abs(v - human_cmd.v) / cfg.v_max, 0.0, 1.0)
    cost = eq11_cost(clear, 0.5 * heading + 0.5 * velocity)
    cost[~free] = np.inf

    cand = np.where(cost <= cost.min() + 1e-12)[0]
    near = (v[cand] - human_cmd.v) ** 2 + (w[cand] - human_cmd.omega) ** 2
    best = cand[int(np.argmin(near))]
    return VelocityCommand(float(v[best]), float(w[best]))


DIRECT = "direct"
BLEND = "blend"


def feasibility_gate(
    pose: Pose,
    human_cmd: VelocityCommand,
    dfield: DistanceField,
    cfg: DwaConfig,
) -> str:
    """Pass the raw operator command through only when its rollout is roomy.

    The command is simulated over the full horizon; a collision anywhere
    or a terminal margin at or below the threshold demands blending.
    """
    poses = rollout(pose, human_cmd, cfg.sim_horizon, cfg.control_period)
    pts = np.array([[p.x, p.y] for p in poses[1:]])
    d = dfield.at_many(pts)
    if (d <= cfg.robot_radius).any():
        return BLEND
    if d[-1] - cfg.robot_radius > cfg.clearance_threshold:
        return DIRECT
    return BLEND


def _lookahead_point(path: PlannedPath, pose: Pose, lookahead: float) -> np.ndarray:
    k = path.nearest_index(pose.xy)
    spacing = path.spacing if path.spacing > 0.0 else 0.1
    steps = max(1, int(round(lookahead / spacing)))
    return path.points[min(k + steps, len(path.points) - 1)]


def track_path(
    pose: Pose,
    path: PlannedPath,
    dfield: DistanceField,
    cfg: DwaConfig,
    current: VelocityCommand | None = None,
) -> VelocityCommand:
    """Standard DWA toward a lookahead point on the planned path.

    Forward-only window; cost mixes terminal heading error toward the
    lookahead, preference for speed, and terminal clearance. Returns the
    zero command once the final path point is within goal_tolerance.
    """
    if current is None:
        current = VelocityCommand(0.0, 0.0)
    target = np.asarray(path.points[-1], dtype=float)
    if math.hypot(pose.x - target[0], pose.y - target[1]) <= cfg.goal_tolerance:
        return VelocityCommand(0.0, 0.0)
    target = _lookahead_point(path, pose, cfg.lookahead)

    vs = _window(current.v, cfg.a_max * cfg.control_period, 0.0, cfg.v_max, cfg.v_samples)
    ws = _window(
        current.omega, cfg.alpha_max * cfg.control_period,
        -cfg.omega_max, cfg.omega_max, cfg.omega_samples,
    )
    v, w, th_end, x_end, y_end, free, clear = _sample_rollouts(pose, vs, ws, dfield, cfg)
    if not free.any():
        raise NoAdmissibleCommand("no admissible command")

    to_target = np.arctan2(target[1] - y_end, target[0] - x_end)
    err = np.abs(((to_target - th_end) + math.pi) % (2.0 * math.pi) - math.pi)
    heading = err / math.pi
    velocity = (cfg.v_max - v) / cfg.v_max
    cost = 0.6 * heading + 0.2 * velocity + 0.2 * (1.0 - clear)
    cost[~free] = np.inf

    cand = np.where(cost <= cost.min() + 1e-12)[0]
    # progress bias on exact ties: faster first, then straighter
    order = np.lexsort((np.abs(w[cand]), -v[cand]))
    best = cand[order[0]]
    return VelocityCommand(float(v[best]), float(w[best]))
