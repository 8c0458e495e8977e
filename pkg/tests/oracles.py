"""Brute-force reference implementations used only by tests.

Each oracle recomputes a contract from first principles along a different route
than the library (explicit minimization, exhaustive search, term-by-term sums),
so agreement is evidence rather than tautology.
"""

import heapq
import math

import numpy as np


def brute_distance_field(cells, resolution):
    """Per-cell min Euclidean distance to any occupied cell center, by explicit min."""
    cells = np.asarray(cells, dtype=bool)
    h, w = cells.shape
    occ = np.argwhere(cells)
    if len(occ) == 0:
        return np.full(cells.shape, np.inf)
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    pts = np.stack([rr.ravel(), cc.ravel()], axis=1)
    d2 = ((pts[:, None, :].astype(float) - occ[None, :, :]) ** 2).sum(axis=-1)
    return np.sqrt(d2.min(axis=1)).reshape(h, w) * resolution


def brute_component_distances(cells, resolution):
    """Distances to each 8-connected obstacle component, by explicit min per component.

    Returns (labels, dists) where dists has shape (n_components, h, w).
    """
    from scipy import ndimage

    cells = np.asarray(cells, dtype=bool)
    labels, n = ndimage.label(cells, structure=np.ones((3, 3), dtype=int))
    h, w = cells.shape
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    pts = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(float)
    dists = np.empty((n, h, w))
    for k in range(1, n + 1):
        comp = np.argwhere(labels == k).astype(float)
        d2 = ((pts[:, None, :] - comp[None, :, :]) ** 2).sum(axis=-1)
        dists[k - 1] = np.sqrt(d2.min(axis=1)).reshape(h, w) * resolution
    return labels, dists


def brute_dvd(cells, resolution, tolerance=None):
    """Region-boundary Voronoi cells by explicit per-component minimization.

    A free cell is on the diagram when its two nearest components tie within
    `tolerance` (default half a cell) or when a 4-neighbor free cell has a
    different nearest component (both sides of the change count).
    """
    cells = np.asarray(cells, dtype=bool)
    if tolerance is None:
        tolerance = 0.5 * resolution
    _, dists = brute_component_distances(cells, resolution)
    if dists.shape[0] < 2:
        return np.zeros(cells.shape, dtype=bool)
    nearest = np.argmin(dists, axis=0)
    part = np.sort(dists, axis=0)
    band = part[1] - part[0] <= tolerance + 1e-9
    h, w = cells.shape
    free = ~cells
    out = band.copy()
    for r in range(h):
        for c in range(w):
            if not free[r, c]:
                out[r, c] = False
                continue
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nr, nc = r + dr, c + dc
                if 0 <= nr < h and 0 <= nc < w and free[nr, nc]:
                    if nearest[nr, nc] != nearest[r, c]:
                        out[r, c] = True
    return out & free


def dijkstra_grid_length(cells, resolution, start_cell, goal_cell, blocked_extra=None):
    """Shortest 8-connected path length (meters) by plain Dijkstra on cell centers.

    Diagonal steps cost sqrt(2) and are forbidden when either orthogonal neighbor
    of the move is blocked (no corner cutting). Returns math.inf when unreachable.
    `blocked_extra` is an optional boolean mask OR-ed with the occupancy.
    """
    cells = np.asarray(cells, dtype=bool)
    blocked = cells.copy()
    if blocked_extra is not None:
        blocked |= np.asarray(blocked_extra, dtype=bool)
    h, w = blocked.shape
    sr, sc = start_cell
    gr, gc = goal_cell
    if blocked[sr, sc] or blocked[gr, gc]:
        return math.inf
    dist = np.full((h, w), np.inf)
    dist[sr, sc] = 0.0
    pq = [(0.0, sr, sc)]
    r2 = math.sqrt(2.0)
    while pq:
        d, r, c = heapq.heappop(pq)
        if d > dist[r, c] + 1e-12:
            continue
        if (r, c) == (gr, gc):
            return d * resolution
        for dr, dc, cost in (
            (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
            (1, 1, r2), (1, -1, r2), (-1, 1, r2), (-1, -1, r2),
        ):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w) or blocked[nr, nc]:
                continue
            if dr != 0 and dc != 0 and (blocked[r + dr, c] or blocked[r, c + dc]):
                continue
            nd = d + cost
            if nd < dist[nr, nc] - 1e-12:
                dist[nr, nc] = nd
                heapq.heappush(pq, (nd, nr, nc))
    return math.inf


def enumerate_simple_paths(incident, src, dst):
    """All simple paths src->dst as (node tuple, edge tuple), by exhaustive DFS.

    `incident`: node -> list of (edge_id, other_node); parallel edges appear
    as separate entries and yield separate paths.
    """
    paths = []

    def rec(nodes, edges, visited):
        cur = nodes[-1]
        if cur == dst:
            paths.append((tuple(nodes), tuple(edges)))
            return
        for eid, other in incident[cur]:
            if other not in visited:
                rec(nodes + [other], edges + [eid], visited | {other})

    rec([src], [], {src})
    return paths


def enumerate_walk_distribution(incident, src, dst):
    """Exact outcome distribution of a uniform random depth-first walk.

    Expands every random choice (uniform over untried incident edges leading
    to unvisited nodes, backtracking on dead ends while nodes stay visited)
    and returns {(node tuple, edge tuple): Fraction probability}.
    """
    from fractions import Fraction

    out = {}
    if src == dst:
        return {((src,), ()): Fraction(1)}

    def rec(node_stack, edge_stack, visited, untried, prob):
        cur = node_stack[-1]
        cand = [e for e in untried[cur] if e[1] not in visited]
        if not cand:
            assert len(node_stack) > 1, "walk exhausted before reaching dst"
            rec(node_stack[:-1], edge_stack[:-1], visited, untried, prob)
            return
        p = prob / len(cand)
        for eid, other in cand:
            unt = {k: [e for e in v if e != (eid, other) or k != cur] for k, v in untried.items()}
            if other == dst:
                key = (tuple(node_stack + [other]), tuple(edge_stack + [eid]))
                out[key] = out.get(key, Fraction(0)) + p
                continue
            unt[other] = list(incident[other])
            rec(node_stack + [other], edge_stack + [eid], visited | {other}, unt, p)

    rec([src], [], {src}, {src: list(incident[src])}, Fraction(1))
    return out


def enumerate_loop_distribution(incident, start, goal):
    """Exact distribution over loop routes goal -> start -> goal."""
    first = enumerate_walk_distribution(incident, goal, start)
    second = enumerate_walk_distribution(incident, start, goal)
    out = {}
    for (n1, e1), p1 in first.items():
        for (n2, e2), p2 in second.items():
            key = (n1 + n2[1:], e1 + e2)
            out[key] = out.get(key, 0) + p1 * p2
    return out


def point_in_triangle(p, a, b, c, eps=1e-9):
    """Inclusive point-in-triangle test via signed areas."""
    p, a, b, c = (np.asarray(v, dtype=float) for v in (p, a, b, c))

    def cross(o, u, v):
        return (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])

    d1 = cross(p, a, b)
    d2 = cross(p, b, c)
    d3 = cross(p, c, a)
    has_neg = (d1 < -eps) or (d2 < -eps) or (d3 < -eps)
    has_pos = (d1 > eps) or (d2 > eps) or (d3 > eps)
    return not (has_neg and has_pos)


def audit_unicycle(points, dt, v_max, omega_max, a_max, tol=1e-6):
    """Check a sampled trajectory against unicycle limits.

    Stationary samples model in-place turning: across a gap of g sample
    intervals between two moving steps, the chord headings may differ by
    up to omega_max * (g + 1) * dt, since both chords lie inside the
    heading span over that window. Acceleration is checked between
    consecutive moving steps; the final step is a partial one and is
    exempt, and any moving step adjacent to a stationary run must itself
    be slow enough to stop or start within one interval's budget.
    """
    points = np.asarray(points, dtype=float)
    steps = points[1:] - points[:-1]
    lengths = np.hypot(steps[:, 0], steps[:, 1])
    moving = np.nonzero(lengths > 1e-9)[0]
    report = {"speed": [], "turn": [], "accel": []}
    if len(moving) == 0:
        return report

    speeds = lengths / dt
    for i in moving:
        if speeds[i] > v_max + tol:
            report["speed"].append((int(i), float(speeds[i])))

    headings = np.arctan2(steps[:, 1], steps[:, 0])
    for k in range(len(moving) - 1):
        i, j = moving[k], moving[k + 1]
        turn = abs(math.remainder(headings[j] - headings[i], math.tau))
        allowed = omega_max * (j - i + 1) * dt
        if turn > allowed + tol:
            report["turn"].append((int(i), int(j), float(turn), float(allowed)))

    stop_speed = a_max * dt
    last = moving[-1]
    for k in range(len(moving) - 1):
        i, j = moving[k], moving[k + 1]
        if j == last:
            continue  # the final step covers partial distance
        if j == i + 1:
            if abs(speeds[j] - speeds[i]) > a_max * dt + tol:
                report["accel"].append((int(i), float(speeds[i]), float(speeds[j])))
        else:
            # full stop in between: both sides must be near stopping speed
            if speeds[i] > stop_speed + tol:
                report["accel"].append((int(i), float(speeds[i]), 0.0))
            if speeds[j] > stop_speed + tol:
                report["accel"].append((int(j), 0.0, float(speeds[j])))
    return report
