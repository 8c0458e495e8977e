"""Grid path planning and the two-stage intention-domain replanner."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .geometry import polyline_length, resample_polyline
from .intent import (
    DegenerateHeadingError,
    HistoryBuffer,
    IntentionDomain,
    InvalidDomainError,
    buffer_axis,
    cone_contains_many,
    predict_subgoal,
)
from .worldmap import DistanceField, Pose


class PlanningError(RuntimeError):
    pass


@dataclass
class PlannedPath:
    """Waypoint path at (approximately) uniform spacing.

    grid_cost is the center-to-center cost reported by the grid search (meters);
    it is what shortest-path audits compare, since the endpoints are snapped to
    the exact query points rather than cell centers.
    """

    points: np.ndarray
    spacing: float
    grid_cost: float = float("nan")

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        return polyline_length(self.points)

    def nearest_index(self, point) -> int:
        """Index of the path point closest to `point` (first index on ties)."""
        p = np.asarray(point, dtype=float)
        d2 = (self.points[:, 0] - p[0]) ** 2 + (self.points[:, 1] - p[1]) ** 2
        return int(np.argmin(d2))

    def save_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("x,y\n")
            for x, y in self.points:
                f.write(f"{float(x)!r},{float(y)!r}\n")

    @classmethod
    def load_csv(cls, path, spacing: float = 0.1) -> "PlannedPath":
        pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(pts, spacing)


# 8-connected moves: (drow, dcol, step cost in cells)
_SQ2 = math.sqrt(2.0)
_MOVES = (
    (0, 1, 1.0), (1, 0, 1.0), (0, -1, 1.0), (-1, 0, 1.0),
    (1, 1, _SQ2), (1, -1, _SQ2), (-1, 1, _SQ2), (-1, -1, _SQ2),
)
_MOVE_ANGLE = [math.atan2(dr, dc) for dr, dc, _ in _MOVES]


def _heading_delta(dir_a: int, dir_b: int) -> float:
    if dir_a < 0 or dir_b < 0:
        return 0.0
    d = abs(_MOVE_ANGLE[dir_a] - _MOVE_ANGLE[dir_b])
    return min(d, 2.0 * math.pi - d)


def _traversable_mask(dfield: DistanceField, robot_radius: float, constraint) -> np.ndarray:
    free = dfield.values > robot_radius
    if constraint is not None:
        h, w = free.shape
        xs = dfield.origin[0] + (np.arange(w) + 0.5) * dfield.resolution
        ys = dfield.origin[1] + (np.arange(h) + 0.5) * dfield.resolution
        gx, gy = np.meshgrid(xs, ys)
        # a cell is in-cone when the cone touches it: dilate by the circumradius
        inside = cone_contains_many(
            constraint,
            np.column_stack([gx.ravel(), gy.ravel()]),
            inflate=dfield.resolution * _SQ2 / 2.0,
        )
        free &= inside.reshape(h, w)
    return free


def plan_path(
    dfield: DistanceField,
    from_pt,
    to_pt,
    robot_radius: float,
    spacing: float = 0.1,
    constraint: IntentionDomain | None = None,
) -> PlannedPath:
    """Shortest 8-connected grid path, resampled to `spacing`.

    Cells are traversable when their clearance exceeds robot_radius and (when a
    cone constraint is given) the cone touches the cell, i.e. membership is
    tested with the cone dilated by the cell circumradius so boundary subgoals
    stay reachable; the from/to cells are exempt from the cone test since the
    cone is needle-thin at its apex. Diagonal moves require both adjacent
    orthogonal cells traversable.
    Equal-cost relaxations prefer the parent with the smaller heading change,
    then the lexicographically smaller parent cell.
    """
    a = np.asarray(from_pt, dtype=float).reshape(2)
    b = np.asarray(to_pt, dtype=float).reshape(2)
    res = dfield.resolution
    hgt, wid = dfield.values.shape

    def cell_of(p):
        return (
            int(math.floor((p[1] - dfield.origin[1]) / res)),
            int(math.floor((p[0] - dfield.origin[0]) / res)),
        )

    sr, sc = cell_of(a)
    gr, gc = cell_of(b)
    if not (0 <= sr < hgt and 0 <= sc < wid) or dfield.values[sr, sc] <= robot_radius:
        raise PlanningError("start cell blocked")
    if not (0 <= gr < hgt and 0 <= gc < wid) or dfield.values[gr, gc] <= robot_radius:
        raise PlanningError("goal cell blocked")

    free = _traversable_mask(dfield, robot_radius, constraint)
    free[sr, sc] = True
    free[gr, gc] = True

    n = hgt * wid
    start = sr * wid + sc
    goal = gr * wid + gc
    g = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    arrive_dir = np.full(n, -1, dtype=np.int8)
    closed = np.zeros(n, dtype=bool)
    g[start] = 0.0

    def heur(r, c):
        return math.hypot(r - gr, c - gc)

    pq = [(heur(sr, sc), 0.0, start)]
    free_flat = free.ravel()
    found = False
    while pq:
        f, negg, u = heapq.heappop(pq)
        if closed[u]:
            continue
        closed[u] = True
        if u == goal:
            found = True
            break
        ur, uc = divmod(u, wid)
        gu = -negg
        udir = arrive_dir[u]
        for mi, (dr, dc, cost) in enumerate(_MOVES):
            vr, vc = ur + dr, uc + dc
            if not (0 <= vr < hgt and 0 <= vc < wid):
                continue
            v = vr * wid + vc
            if closed[v] or not free_flat[v]:
                continue
            if dr != 0 and dc != 0:
                if not (free_flat[ur * wid + vc] and free_flat[vr * wid + uc]):
                    continue
            ng = gu + cost
            if ng < g[v] - 1e-12:
                g[v] = ng
                parent[v] = u
                arrive_dir[v] = mi
                heapq.heappush(pq, (ng + heur(vr, vc), -ng, v))
            elif ng <= g[v] + 1e-12 and parent[v] >= 0:
                old_u = parent[v]
                old_key = (_heading_delta(arrive_dir[old_u], arrive_dir[v]),
                           divmod(old_u, wid))
                new_key = (_heading_delta(udir, mi), (ur, uc))
                if new_key < old_key:
                    parent[v] = u
                    arrive_dir[v] = np.int8(mi)
    if not found:
        raise PlanningError("no path")

    cells = []
    u = goal
    while u >= 0:
        cells.append(u)
        u = parent[u]
    cells.reverse()
    centers = np.array(
        [
            (
                dfield.origin[0] + (c % wid + 0.5) * res,
                dfield.origin[1] + (c // wid + 0.5) * res,
            )
            for c in cells
        ]
    )
    centers[0] = a
    centers[-1] = b
    pts = resample_polyline(centers, spacing)
    return PlannedPath(pts, spacing, grid_cost=float(g[goal]) * res)


@dataclass
class ReplanResult:
    path: PlannedPath
    domain: IntentionDomain
    subgoal: np.ndarray


def replan(
    dfield: DistanceField,
    pose: Pose,
    buffer: HistoryBuffer,
    goal,
    robot_radius: float,
    h: float,
    r: float,
    m: int = 5,
    spacing: float = 0.1,
) -> ReplanResult:
    """Two-stage replanning inside a predicted intention domain.

    Builds the cone at the robot position along the buffered heading, picks the
    base subgoal nearest the final goal, plans stage one inside the cone and
    stage two unconstrained, and concatenates them (dropping the duplicate
    joint point).
    """
    axis = buffer_axis(buffer, m)
    domain = IntentionDomain(pose.xy, axis, h, r)
    subgoal = predict_subgoal(domain, dfield, goal, robot_radius, spacing)
    stage1 = plan_path(dfield, pose.xy, subgoal, robot_radius, spacing, constraint=domain)
    stage2 = plan_path(dfield, subgoal, goal, robot_radius, spacing)
    merged = np.vstack([stage1.points, stage2.points[1:]])
    cost = stage1.grid_cost + stage2.grid_cost
    return ReplanResult(PlannedPath(merged, spacing, grid_cost=cost), domain, subgoal)


@dataclass
class StepOutcome:
    """Result of one replanning decision."""

    path: PlannedPath
    triggered: bool = False
    domain: IntentionDomain | None = None
    subgoal: np.ndarray | None = None
    failure: str | None = None


def replanning_step(
    dfield: DistanceField,
    pose: Pose,
    buffer: HistoryBuffer,
    current_path: PlannedPath,
    goal,
    action,
    robot_radius: float,
    m: int = 5,
    spacing: float = 0.1,
) -> StepOutcome:
    """One decision: keep the path, or execute a triggered replan.

    action is (a, h, r). With a=0, a non-full buffer, or a failed replan the
    current path is kept; failures (invalid domain, degenerate heading, no
    feasible in-cone path) are reported so the caller can apply the halt rule.
    The trigger is consumed by executing it; it does not persist.
    """
    a, h, r = action
    if not buffer.full or int(a) != 1:
        return StepOutcome(path=current_path)
    try:
        result = replan(dfield, pose, buffer, goal, robot_radius, h, r, m, spacing)
    except (InvalidDomainError, DegenerateHeadingError, PlanningError) as err:
        return StepOutcome(path=current_path, failure=str(err))
    return StepOutcome(
        path=result.path,
        triggered=True,
        domain=result.domain,
        subgoal=result.subgoal,
    )
