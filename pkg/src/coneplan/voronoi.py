"""Clearance-ridge route graphs over occupancy grids.

The free space of a grid is summarized by its discretized Voronoi diagram:
the set of free cells whose two nearest obstacle components are equally
far within half a cell. Thinning that band yields a graph whose edges run
along ridges of locally maximal clearance and whose nodes are ridge
junctions. Start and goal points attach to the ridge by straight
collision-free connectors. Loop routes through the graph are sampled with
a randomized depth-first walk; they seed human-like trajectory synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from .worldmap import DistanceField, OccupancyGrid, distance_field

_EIGHT = np.ones((3, 3), dtype=int)


class RouteError(RuntimeError):
    """Raised when start and goal cannot be joined through the route graph."""


def extract_dvd(grid: OccupancyGrid) -> set[tuple[int, int]]:
    """Cells of the discretized Voronoi diagram of the obstacle set.

    A free cell belongs to the diagram when it sits on the boundary of
    the nearest-obstacle-component regions: either its two nearest
    components (8-connected) are equidistant within half a cell, or a
    4-neighbor is claimed by a different nearest component. The tie band
    alone fragments on a grid, so both sides of every label change are
    included, which keeps the diagram connected along region boundaries.
    Fewer than two components give an empty set.
    """
    occ = grid.cells
    labels, n = ndimage.label(occ, structure=_EIGHT)
    if n < 2:
        return set()
    res = grid.resolution
    dists = np.empty((n,) + occ.shape)
    for k in range(1, n + 1):
        dists[k - 1] = ndimage.distance_transform_edt(labels != k) * res
    nearest = np.argmin(dists, axis=0)
    dists.sort(axis=0)
    band = dists[1] - dists[0] <= 0.5 * res + 1e-9
    free = ~occ
    for axis in (0, 1):
        a = np.take(nearest, range(nearest.shape[axis] - 1), axis=axis)
        b = np.take(nearest, range(1, nearest.shape[axis]), axis=axis)
        fa = np.take(free, range(free.shape[axis] - 1), axis=axis)
        fb = np.take(free, range(1, free.shape[axis]), axis=axis)
        change = (a != b) & fa & fb
        pad_lo = np.zeros_like(change)
        grow = np.concatenate([change, np.take(pad_lo, [0], axis=axis)], axis=axis)
        grow |= np.concatenate([np.take(pad_lo, [0], axis=axis), change], axis=axis)
        band |= grow
    band &= free
    return {(int(r), int(c)) for r, c in zip(*np.nonzero(band))}


@dataclass(frozen=True)
class GraphNode:
    id: int
    position: tuple[float, float]
    kind: str  # "Junction", "Start" or "Goal"


@dataclass(frozen=True, eq=False)
class GraphEdge:
    id: int
    node_a: int
    node_b: int
    polyline: np.ndarray  # (n, 2); ends coincide with the node positions
    min_clearance: float


@dataclass
class VoronoiGraph:
    """Undirected multigraph of clearance ridges plus Start/Goal nodes."""

    nodes: list[GraphNode]
    edges: list[GraphEdge]
    start_id: int
    goal_id: int
    _by_id: dict = field(init=False, repr=False)
    _edge_by_id: dict = field(init=False, repr=False)
    _adj: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}
        self._edge_by_id = {e.id: e for e in self.edges}
        self._adj = {n.id: [] for n in self.nodes}
        for e in self.edges:
            self._adj[e.node_a].append(e)
            if e.node_b != e.node_a:
                self._adj[e.node_b].append(e)

    def node(self, node_id: int) -> GraphNode:
        return self._by_id[node_id]

    def edge(self, edge_id: int) -> GraphEdge:
        return self._edge_by_id[edge_id]

    def incident(self, node_id: int) -> list[GraphEdge]:
        return self._adj[node_id]

    def oriented_polyline(self, edge: GraphEdge, from_id: int) -> np.ndarray:
        return edge.polyline if edge.node_a == from_id else edge.polyline[::-1]

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n.id, "position": [n.position[0], n.position[1]], "kind": n.kind}
                for n in self.nodes
            ],
            "edges": [
                {
                    "id": e.id,
                    "node_a": e.node_a,
                    "node_b": e.node_b,
                    "polyline": [[float(x), float(y)] for x, y in e.polyline],
                    "min_clearance": e.min_clearance,
                }
                for e in self.edges
            ],
            "start_id": self.start_id,
            "goal_id": self.goal_id,
        }


def _other(edge: GraphEdge, node_id: int) -> int:
    return edge.node_b if node_id == edge.node_a else edge.node_a


def _segment_samples(a, b, step: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = max(1, int(np.ceil(np.hypot(*(b - a)) / step)))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return a + t * (b - a)

def _polyline_clearance(polyline: np.ndarray, dfield: DistanceField) -> float:
    pts = [
        _segment_samples(polyline[i], polyline[i + 1], dfield.resolution / 2.0)
        for i in range(len(polyline) - 1)
    ]
    return float(dfield.at_many(np.vstack(pts)).min())


def _neighbor_count(mask: np.ndarray) -> np.ndarray:
    k = np.ones((3, 3), dtype=int)
    k[1, 1] = 0
    return ndimage.convolve(mask.astype(int), k, mode="constant", cval=0)


def _order_chain(cells: list[tuple[int, int]]) -> tuple[list[tuple[int, int]], bool]:
    """Order a degree<=2 cell component along its path; True when a cycle."""
    cells = sorted(cells)
    cellset = set(cells)
    nbrs = {}
    for r, c in cells:
        nbrs[(r, c)] = sorted(
            (r + dr, c + dc)
            for dr in (-1, 0, 1)
            for dc in (-1, 0, 1)
            if (dr or dc) and (r + dr, c + dc) in cellset
        )
    ends = [c for c in cells if len(nbrs[c]) <= 1]
    cycle = not ends
    cur = cells[0] if cycle else min(ends)
    seen = {cur}
    order = [cur]
    while True:
        step = [n for n in nbrs[cur] if n not in seen]
        if not step:
            break
        cur = step[0]
        seen.add(cur)
        order.append(cur)
    return order, cycle


def _skeleton_graph(skel: np.ndarray, grid: OccupancyGrid, dfield: DistanceField):
    """Contract a thinned ridge mask into junction nodes and chain edges."""
    deg = _neighbor_count(skel)
    junction = skel & (deg != 2)
    chain = skel & (deg == 2)

    jlabels, jn = ndimage.label(junction, structure=_EIGHT)
    cluster_cells: dict[int, list[tuple[int, int]]] = {k: [] for k in range(1, jn + 1)}
    for r, c in zip(*np.nonzero(junction)):
        cluster_cells[int(jlabels[r, c])].append((int(r), int(c)))
    reps = {k: min(v) for k, v in cluster_cells.items()}

    nodes: list[GraphNode] = []
    node_of_label: dict[int, int] = {}
    for nid, k in enumerate(sorted(cluster_cells, key=lambda k: reps[k])):
        pos = grid.cell_center(*reps[k])
        node_of_label[k] = nid
        nodes.append(GraphNode(nid, (float(pos[0]), float(pos[1])), "Junction"))

    def touching_clusters(cell):
        r, c = cell
        labs = set()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if (dr or dc) and grid.in_bounds(r + dr, c + dc):
                    lab = int(jlabels[r + dr, c + dc])
                    if lab:
                        labs.add(lab)
        return sorted(labs)

    edges: list[GraphEdge] = []
    clabels, cn = ndimage.label(chain, structure=_EIGHT)
    comp_cells: dict[int, list[tuple[int, int]]] = {k: [] for k in range(1, cn + 1)}
    for r, c in zip(*np.nonzero(chain)):
        comp_cells[int(clabels[r, c])].append((int(r), int(c)))

    def add_edge(a, b, polyline):
        edges.append(
            GraphEdge(len(edges), a, b, polyline, _polyline_clearance(polyline, dfield))
        )

    for k in sorted(comp_cells, key=lambda k: min(comp_cells[k])):
        order, cycle = _order_chain(comp_cells[k])
        centers = np.array([grid.cell_center(r, c) for r, c in order])
        if cycle:
            # ridge ring with no junction: anchor it at its smallest cell
            nid = len(nodes)
            pos = centers[0]
            nodes.append(GraphNode(nid, (float(pos[0]), float(pos[1])), "Junction"))
            add_edge(nid, nid, np.vstack([centers, centers[:1]]))
            continue
        head = touching_clusters(order[0])
        tail = touching_clusters(order[-1])
        if not head or not tail:
            continue  # stray fragment with a loose end; not a usable route
        if len(order) == 1 and len(head) >= 2:
            a, b = node_of_label[head[0]], node_of_label[head[1]]
        else:
            a, b = node_of_label[head[0]], node_of_label[tail[0]]
        poly = np.vstack([[nodes[a].position], centers, [nodes[b].position]])
        add_edge(a, b, poly)

    # clusters may touch each other with no chain between them
    for k1 in sorted(cluster_cells, key=lambda k: reps[k]):
        seen = set()
        for cell in cluster_cells[k1]:
            for k2 in touching_clusters(cell):
                if k2 > k1 and k2 not in seen:
                    seen.add(k2)
                    a, b = node_of_label[k1], node_of_label[k2]
                    poly = np.array([nodes[a].position, nodes[b].position])
                    add_edge(a, b, poly)
    return nodes, edges


def build_graph(
    dvd: set[tuple[int, int]],
    grid: OccupancyGrid,
    start,
    goal,
    robot_radius: float,
    safety_margin: float = 0.05,
) -> VoronoiGraph:
    """Voronoi route graph with Start and Goal attached.

    The diagram band is thinned to unit width, contracted into junction
    nodes and chain edges, and edges narrower than robot_radius +
    safety_margin are discarded. Start and goal join the ridge by the
    nearest straight connector that keeps that same clearance, splitting
    an edge when the best attachment point lies mid-chain. A grid whose
    diagram is empty (fewer than two obstacle components) degenerates to
    a two-node graph with one straight start-goal edge.
    """
    dfield = distance_field(grid)
    start = (float(start[0]), float(start[1]))
    goal = (float(goal[0]), float(goal[1]))

    mask = np.zeros(grid.cells.shape, dtype=bool)
    for r, c in dvd:
        mask[r, c] = True

    if mask.any():
        nodes, edges = _skeleton_graph(skeletonize(mask), grid, dfield)
        edges = [e for e in edges if e.min_clearance > robot_radius + safety_margin]
        used = {e.node_a for e in edges} | {e.node_b for e in edges}
        nodes = [n for n in nodes if n.id in used]
        if not edges:
            raise RouteError("no connected Voronoi route")
        threshold = robot_radius + safety_margin
        start_id = _attach(start, "Start", nodes, edges, dfield, threshold)
        goal_id = _attach(goal, "Goal", nodes, edges, dfield, threshold)
    else:
        poly = np.array([start, goal])
        if _polyline_clearance(poly, dfield) <= robot_radius + safety_margin:
            raise RouteError("no connected Voronoi route")
        nodes = [GraphNode(0, start, "Start"), GraphNode(1, goal, "Goal")]
        edges = [GraphEdge(0, 0, 1, poly, _polyline_clearance(poly, dfield))]
        start_id, goal_id = 0, 1

    graph = VoronoiGraph(nodes, edges, start_id, goal_id)
    if not _connected(graph, start_id, goal_id):
        raise RouteError("no connected Voronoi route")
    return graph


def _attach(point, kind, nodes, edges, dfield, threshold) -> int:
    """Join a point to the graph in place; returns the new node's id.

    Candidates (node positions and edge polyline interiors) are tried in
    distance order; the first whose straight connector keeps clearance
    above the pruning threshold wins. A mid-edge attachment splits the
    edge at that point into two.
    """
    candidates = []
    for n in nodes:
        d = float(np.hypot(point[0] - n.position[0], point[1] - n.position[1]))
        candidates.append((d, 0, n.id, -1))
    for e in edges:
        for i in range(1, len(e.polyline) - 1):
            d = float(np.hypot(point[0] - e.polyline[i][0], point[1] - e.polyline[i][1]))
            candidates.append((d, 1, e.id, i))
    candidates.sort()

    by_id = {n.id: n for n in nodes}
    edge_index = {e.id: i for i, e in enumerate(edges)}
    for d, tag, ref, i in candidates:
        if tag == 0:
            target = by_id[ref].position
        else:
            pt = edges[edge_index[ref]].polyline[i]
            target = (float(pt[0]), float(pt[1]))
        if _polyline_clearance(np.array([point, target]), dfield) <= threshold:
            continue
        next_nid = max(n.id for n in nodes) + 1
        if tag == 1:
            e = edges.pop(edge_index[ref])
            anchor = GraphNode(next_nid, target, "Junction")
            nodes.append(anchor)
            next_nid += 1
            eid = max((x.id for x in edges), default=-1) + 1
            first, second = e.polyline[: i + 1], e.polyline[i:]
            edges.append(
                GraphEdge(eid, e.node_a, anchor.id, first, _polyline_clearance(first, dfield))
            )
            edges.append(
                GraphEdge(eid + 1, anchor.id, e.node_b, second, _polyline_clearance(second, dfield))
            )
        else:
            anchor = by_id[ref]
        if d < 1e-9:
            # the point sits exactly on the anchor: re-kind it instead
            nodes.remove(anchor)
            nodes.append(GraphNode(anchor.id, anchor.position, kind))
            return anchor.id
        new = GraphNode(next_nid, point, kind)
        nodes.append(new)
        eid = max((x.id for x in edges), default=-1) + 1
        conn = np.array([new.position, anchor.position])
        edges.append(GraphEdge(eid, new.id, anchor.id, conn, _polyline_clearance(conn, dfield)))
        return new.id
    raise RouteError("no connected Voronoi route")


def _connected(graph: VoronoiGraph, src: int, dst: int) -> bool:
    seen = {src}
    frontier = [src]
    while frontier:
        cur = frontier.pop()
        if cur == dst:
            return True
        for e in graph.incident(cur):
            nxt = _other(e, cur)
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return dst in seen


def _sample_walk(graph: VoronoiGraph, src: int, dst: int, rng) -> tuple[list[int], list[int]]:
    """One randomized depth-first simple walk from src to dst.

    Each step picks uniformly among the untried incident edges that lead
    to unvisited nodes; dead ends backtrack but stay visited, so the walk
    terminates and every simple path keeps positive probability. Shorter
    routes are never less likely than longer ones sharing their prefix.
    """
    if src == dst:
        return [src], []
    visited = {src}
    node_stack = [src]
    edge_stack: list[GraphEdge] = []
    untried = {src: list(graph.incident(src))}
    while node_stack:
        cur = node_stack[-1]
        cand = [e for e in untried[cur] if _other(e, cur) not in visited]
        if not cand:
            node_stack.pop()
            if edge_stack:
                edge_stack.pop()
            continue
        e = cand[int(rng.integers(len(cand)))]
        untried[cur].remove(e)
        nxt = _other(e, cur)
        visited.add(nxt)
        node_stack.append(nxt)
        edge_stack.append(e)
        if nxt == dst:
            return list(node_stack), [e.id for e in edge_stack]
        untried[nxt] = list(graph.incident(nxt))
    raise RouteError("no connected Voronoi route")


def sample_loop_walk(graph: VoronoiGraph, rng) -> tuple[list[int], list[int]]:
    """Loop route goal -> start -> goal as (node ids, edge ids)."""
    n1, e1 = _sample_walk(graph, graph.goal_id, graph.start_id, rng)
    n2, e2 = _sample_walk(graph, graph.start_id, graph.goal_id, rng)
    return n1 + n2[1:], e1 + e2


def sample_loop_path(graph: VoronoiGraph, rng_seed: int) -> list[int]:
    """Node ids of a sampled loop route; deterministic under the seed."""
    rng = np.random.default_rng(rng_seed)
    nodes, _ = sample_loop_walk(graph, rng)
    return nodes


def walk_polyline(graph: VoronoiGraph, node_ids: list[int], edge_ids: list[int]) -> np.ndarray:
    """Concatenated geometric polyline of a walk through the graph."""
    pts = [np.asarray(graph.node(node_ids[0]).position)[None, :]]
    for nid, eid in zip(node_ids[:-1], edge_ids):
        poly = graph.oriented_polyline(graph.edge(eid), nid)
        pts.append(poly[1:])
    return np.vstack(pts)
