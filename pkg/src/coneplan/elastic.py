"""Corridor-constrained elastic-band trajectories.

A route polyline is wrapped in a sequence of clearance circles, a via
point is drawn inside each circle, and a waypoint band is relaxed against
length, bending, via-attraction and corridor-containment penalties. The
band is then time-parameterized under unicycle limits with a
curvature-aware speed profile; sharp reversals become in-place turns
(position held while the heading sweeps at the rate limit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import cum_arclength, dedupe_polyline, interp_along, resample_polyline
from .voronoi import build_graph, extract_dvd, sample_loop_walk, walk_polyline
from .worldmap import DistanceField, OccupancyGrid, distance_field


class CorridorBreakError(RuntimeError):
    """Raised when the route polyline touches the robot's clearance limit."""


class OptimizationError(RuntimeError):
    """Raised when the band cannot satisfy its constraints."""


@dataclass(frozen=True)
class KinematicLimits:
    v_max: float
    omega_max: float
    a_max: float


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float


@dataclass
class Corridor:
    """Chain of clearance circles around a route polyline.

    Each radius equals the distance-field value at the center minus the
    robot radius, so any point strictly inside a circle keeps positive
    clearance beyond the robot radius.
    """

    circles: list[Circle]

    def __len__(self) -> int:
        return len(self.circles)

    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.circles])

    def radii(self) -> np.ndarray:
        return np.array([c.radius for c in self.circles])


@dataclass
class Trajectory:
    """Equally time-spaced positions; times are index * dt."""

    points: np.ndarray  # (n, 2)
    dt: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.points)) * self.dt

    @property
    def duration(self) -> float:
        return (len(self.points) - 1) * self.dt

    def save_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("t,x,y\n")
            for t, (x, y) in zip(self.times, self.points):
                f.write(f"{float(t)!r},{float(x)!r},{float(y)!r}\n")


def load_trajectory_csv(path) -> Trajectory:
    with open(path) as f:
        header = f.readline().strip()
        if header != "t,x,y":
            raise ValueError(f"unexpected trajectory header: {header!r}")
        rows = [tuple(float(v) for v in line.split(",")) for line in f if line.strip()]
    ts = np.array([r[0] for r in rows])
    pts = np.array([[r[1], r[2]] for r in rows])
    dt = float(ts[1] - ts[0]) if len(ts) > 1 else 0.1
    return Trajectory(pts, dt)


def build_corridor(initial_path, dfield: DistanceField, robot_radius: float,
                   max_radius: float = math.inf) -> Corridor:
    """Cover a route polyline with clearance circles.

    The first circle sits at the path start; each next circle sits at the
    first path point outside the previous one; construction stops once the
    rest of the path is contained. `max_radius` caps circles on maps with
    unbounded clearance (all-free grids report an infinite distance field).
    """
    path = np.asarray(initial_path, dtype=float).reshape(-1, 2)
    if len(path) == 0:
        raise ValueError("empty initial path")
    clear = dfield.at_many(path)
    if (clear <= robot_radius).any():
        i = int(np.argmax(clear <= robot_radius))
        raise CorridorBreakError(
            f"corridor break: path point {path[i].tolist()} has clearance "
            f"{clear[i]:.3f} <= robot radius {robot_radius:.3f}"
        )
    circles = []
    i = 0
    while True:
        center = path[i]
        radius = min(float(dfield.at(center)) - robot_radius, max_radius)
        circles.append(Circle((float(center[0]), float(center[1])), radius))
        outside = np.hypot(*(path[i:] - center).T) > radius
        if not outside.any():
            break
        i += int(np.argmax(outside))
    return Corridor(circles)


def sample_via_points(corridor: Corridor, rng_seed: int) -> np.ndarray:
    """One via point per circle from an isotropic Gaussian (sigma = r/2).

    Draws are rejected until strictly inside their circle, which by the
    corridor invariant also keeps them collision-free; after 100 rejected
    attempts the circle center is used. Deterministic under the seed.
    """
    rng = np.random.default_rng(rng_seed)
    out = []
    for circle in corridor.circles:
        center = np.asarray(circle.center)
        via = center
        for _ in range(100):
            p = rng.normal(center, max(circle.radius, 0.0) / 2.0)
            if np.hypot(*(p - center)) < circle.radius:
                via = p
                break
        out.append(via)
    return np.array(out)


def _menger_curvature(a, b, c) -> float:
    ab = b - a
    bc = c - b
    ac = c - a
    denom = np.hypot(*ab) * np.hypot(*bc) * np.hypot(*ac)
    if denom < 1e-12:
        return 0.0
    cross = ab[0] * bc[1] - ab[1] * bc[0]
    return float(2.0 * abs(cross) / denom)


def _relax_band(way, via_idx, vias, centers, radii, fixed_margin, iters, step):
    """Gradient descent on the waypoint band; endpoints stay pinned."""
    w_len, w_bend, w_via, w_cor = 1.0, 4.0, 30.0, 60.0
    eff_r = np.maximum(radii - fixed_margin, 0.5 * radii)
    for _ in range(iters):
        grad = np.zeros_like(way)
        # elasticity pulls toward even, short spacing
        grad[1:-1] += w_len * 2.0 * (2.0 * way[1:-1] - way[:-2] - way[2:])
        # bending resists curvature: d/dW of sum |W[i+1] - 2 W[i] + W[i-1]|^2
        second = way[2:] - 2.0 * way[1:-1] + way[:-2]
        bend = np.zeros_like(way)
        bend[:-2] += second
        bend[1:-1] -= 2.0 * second
        bend[2:] += second
        grad += w_bend * 2.0 * bend
        # via attraction
        grad[via_idx] += w_via * 2.0 * (way[via_idx] - vias)
        # corridor containment toward the best circle
        diff = way[:, None, :] - centers[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        margin = dist - eff_r[None, :]
        best = np.argmin(margin, axis=1)
        m = margin[np.arange(len(way)), best]
        outside = m > 0
        if outside.any():
            d = dist[np.arange(len(way)), best]
            unit = diff[np.arange(len(way)), best] / np.maximum(d, 1e-9)[:, None]
            grad[outside] += w_cor * 2.0 * m[outside, None] * unit[outside]
        grad[0] = 0.0
        grad[-1] = 0.0
        way = way - step * grad
    return way


def _project_into_circles(way, centers, radii, margin):
    """Snap any waypoint outside every circle onto its nearest circle."""
    diff = way[:, None, :] - centers[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    slack = dist - radii[None, :]
    best = np.argmin(slack, axis=1)
    rows = np.arange(len(way))
    m = slack[rows, best]
    target_r = np.maximum(radii[best] - margin, 0.0)
    outside = dist[rows, best] > target_r
    outside[0] = outside[-1] = False
    if outside.any():
        d = np.maximum(dist[rows, best], 1e-9)
        scale = target_r / d
        proj = centers[best] + diff[rows, best] * scale[:, None]
        way = way.copy()
        way[outside] = proj[outside]
    return way


def _vertex_turns(way) -> np.ndarray:
    """Unsigned heading change at each interior waypoint."""
    turns = np.zeros(len(way))
    d = way[1:] - way[:-1]
    for i in range(1, len(way) - 1):
        d1, d2 = d[i - 1], d[i]
        if np.hypot(*d1) < 1e-12 or np.hypot(*d2) < 1e-12:
            continue
        turns[i] = abs(math.atan2(d1[0] * d2[1] - d1[1] * d2[0], float(np.dot(d1, d2))))
    return turns


def _speed_profile(way, limits: KinematicLimits, dt: float):
    """Per-waypoint speed caps plus in-place turn (hold) points.

    Smooth curvature is handled by capping speed so the swept heading per
    step stays under the rate limit. A vertex whose single-point turn
    exceeds one step's heading budget cannot be driven through at any
    speed, so the band stops there, swivels in place for enough steps,
    and moves on; those vertices get a speed low enough to stop within
    one step's acceleration budget.
    """
    n = len(way)
    v = np.full(n, limits.v_max)
    turn_budget = 0.9 * limits.omega_max * dt
    turns = _vertex_turns(way)
    holds = []
    for i in range(1, n - 1):
        if turns[i] > turn_budget:
            holds.append((i, turns[i]))
            v[i] = min(v[i], 0.4 * limits.a_max * dt)
            continue
        kappa = _menger_curvature(way[i - 1], way[i], way[i + 1])
        if kappa > 1e-9:
            v[i] = min(v[i], 0.85 * limits.omega_max / kappa)
    v = np.maximum(v, 0.01)
    # profile slopes shallower than the sampler's time ramp so the
    # tracked speed never lags above a tightening curvature cap
    a_prof = 0.8 * limits.a_max
    ds = np.hypot(*(way[1:] - way[:-1]).T)
    for i in range(n - 1):  # forward acceleration limit
        v[i + 1] = min(v[i + 1], math.sqrt(v[i] ** 2 + 2.0 * a_prof * ds[i]))
    for i in range(n - 2, -1, -1):  # backward deceleration limit
        v[i] = min(v[i], math.sqrt(v[i + 1] ** 2 + 2.0 * a_prof * ds[i]))
    return v, holds


def _time_sample(way, v_wp, holds, dt, limits: KinematicLimits):
    """Sample the band at dt with an explicit speed state.

    The speed ramps toward the profile value at under a_max per step, so
    consecutive sample speeds always differ by a feasible amount. Ahead
    of a hold waypoint the speed is held under the braking curve that
    reaches near-rest exactly at the hold; arriving there the position
    repeats long enough to sweep the vertex turn at omega_max.
    """
    s_wp = cum_arclength(way)
    total = float(s_wp[-1])
    pause_at = sorted(
        (float(s_wp[i]), int(math.ceil(turn / (0.9 * limits.omega_max * dt))))
        for i, turn in holds
    )
    a_ramp = 0.95 * limits.a_max
    a_brake = 0.8 * limits.a_max
    v_stop = 0.4 * limits.a_max * dt

    samples = [way[0].copy()]
    s = 0.0
    v_cur = 0.0
    next_pause = 0
    guard = 0
    while s < total - 1e-9:
        guard += 1
        if guard > 1_000_000:
            raise OptimizationError("optimization infeasible: time sampling stalled")
        v_t = min(float(np.interp(s, s_wp, v_wp)), limits.v_max)
        if next_pause < len(pause_at):
            gap = max(pause_at[next_pause][0] - s, 0.0)
            # largest v with v <= braking curve evaluated after moving v*dt
            bd = a_brake * dt
            v_t = min(v_t, math.sqrt(bd * bd + v_stop * v_stop + 2.0 * a_brake * gap) - bd)
        v_cur = float(np.clip(v_t, v_cur - a_ramp * dt, v_cur + a_ramp * dt))
        v_cur = max(v_cur, 1e-3)
        s_new = s + v_cur * dt
        if next_pause < len(pause_at) and s_new >= pause_at[next_pause][0] - 1e-9:
            s_hold, n_hold = pause_at[next_pause]
            next_pause += 1
            s = s_hold
            pos = interp_along(way, [s])[0]
            samples.extend([pos.copy() for _ in range(n_hold + 1)])
            v_cur = 0.0
        else:
            s = min(s_new, total)
            samples.append(interp_along(way, [s])[0])
    return np.array(samples)


def optimize_trajectory(
    start,
    end,
    corridor: Corridor,
    via_points,
    dt: float,
    kinematics: KinematicLimits,
    *,
    boundary_margin: float = 0.0,
    spacing: float = 0.05,
    iters: int = 400,
    step: float = 0.004,
    via_tolerance: float = 0.1,
) -> Trajectory:
    """Time-parameterized trajectory through the corridor and via points.

    The band is seeded by the via polyline, relaxed against length,
    bending, via and containment penalties, projected into the circles,
    and sampled at dt under the unicycle limits. `boundary_margin` pulls
    the containment target away from circle boundaries, which absorbs
    grid-cell quantization when clearance is audited on a distance field.
    Raises "optimization infeasible" when a via point ends up farther
    than `via_tolerance` from the band.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    vias = np.asarray(via_points, dtype=float).reshape(-1, 2).copy()
    if len(corridor) == 0:
        raise ValueError("empty corridor")
    if len(vias) != len(corridor):
        raise ValueError("one via point per corridor circle required")

    # the band lives in margin-shrunk circles, so vias must too
    for k, circ in enumerate(corridor.circles):
        eff_r = max(circ.radius - boundary_margin, 0.5 * circ.radius) - 1e-6
        off = vias[k] - np.asarray(circ.center)
        d = float(np.hypot(*off))
        if d > eff_r > 0.0:
            vias[k] = np.asarray(circ.center) + off * (eff_r / d)

    raw_seed = np.vstack([start[None, :], vias, end[None, :]])
    seed_pts = dedupe_polyline(raw_seed)
    way = resample_polyline(seed_pts, spacing)
    if len(way) < 3:
        way = resample_polyline(seed_pts, np.linalg.norm(end - start) / 4.0 or spacing)

    # pin each via to the nearest waypoint, keeping visit order strict;
    # arc positions come from the raw chain so coincident points stay aligned
    s_way = cum_arclength(way)
    s_vias = cum_arclength(raw_seed)[1 : 1 + len(vias)]
    via_idx = np.searchsorted(s_way, s_vias)
    via_idx = np.clip(via_idx, 1, len(way) - 2)
    for k in range(1, len(via_idx)):
        if via_idx[k] <= via_idx[k - 1]:
            via_idx[k] = min(via_idx[k - 1] + 1, len(way) - 2)

    centers = corridor.centers()
    radii = corridor.radii()
    way = _relax_band(way, via_idx, vias, centers, radii, boundary_margin, iters, step)
    way = _project_into_circles(way, centers, radii, max(boundary_margin, 1e-3))
    way = dedupe_polyline(way)

    missed = np.array(
        [np.min(np.hypot(*(way - v).T)) for v in vias]
    )
    if (missed > via_tolerance).any():
        k = int(np.argmax(missed))
        raise OptimizationError(
            f"optimization infeasible: via point {k} missed by {missed[k]:.3f} m"
        )

    v_wp, holds = _speed_profile(way, kinematics, dt)
    pts = _time_sample(way, v_wp, holds, dt, kinematics)
    return Trajectory(pts, dt)


def trajectory_from_walk(
    grid: OccupancyGrid,
    dfield,
    graph,
    nodes: list[int],
    edges: list[int],
    start,
    end,
    dt: float,
    via_seed: int,
    *,
    robot_radius: float = 0.15,
    kinematics: KinematicLimits | None = None,
) -> Trajectory:
    """Timed trajectory along an explicit goal -> start -> goal graph walk.

    The walk is unrolled into three legs actually driven start -> goal ->
    start -> goal, so the trajectory revisits its ground and ends at the
    goal the way a wandering operator would. The leg chain is wrapped in
    a clearance corridor, via points randomize the shape, and the elastic
    band turns it into a timed, limit-respecting trajectory. Fields with
    no obstacle have their infinite clearance capped at a 1 m corridor
    radius.
    """
    if kinematics is None:
        kinematics = KinematicLimits(0.5, 1.5, 1.0)
    k = nodes.index(graph.start_id)
    leg_back = walk_polyline(graph, nodes[: k + 1], edges[:k])  # goal -> start
    leg_out = walk_polyline(graph, nodes[k:], edges[k:])  # start -> goal
    chain = dedupe_polyline(np.vstack([leg_back[::-1], leg_back[1:], leg_out[1:]]))
    chain = resample_polyline(chain, 0.05)

    cap = 1.0 if math.isinf(float(np.max(dfield.values))) else math.inf
    corridor = build_corridor(chain, dfield, robot_radius, max_radius=cap)
    vias = sample_via_points(corridor, via_seed)
    margin = math.sqrt(2.0) * grid.resolution + 1e-6
    return optimize_trajectory(
        start, end, corridor, vias, dt, kinematics, boundary_margin=margin
    )


def generate_human_trajectory(
    grid: OccupancyGrid,
    start,
    end,
    dt: float,
    rng_seed: int,
    *,
    robot_radius: float = 0.15,
    kinematics: KinematicLimits | None = None,
) -> Trajectory:
    """Full human-like trajectory synthesis on one grid.

    Samples a loop route goal -> start -> goal on the Voronoi graph and
    hands it to trajectory_from_walk; the single seed splits into the
    route seed and the via-point seed.
    """
    loop_seed, via_seed = (
        int(x) for x in np.random.SeedSequence(rng_seed).generate_state(2)
    )
    dfield = distance_field(grid)
    graph = build_graph(extract_dvd(grid), grid, start, end, robot_radius)
    nodes, edges = sample_loop_walk(graph, np.random.default_rng(loop_seed))
    return trajectory_from_walk(
        grid,
        dfield,
        graph,
        nodes,
        edges,
        start,
        end,
        dt,
        via_seed,
        robot_radius=robot_radius,
        kinematics=kinematics,
    )
