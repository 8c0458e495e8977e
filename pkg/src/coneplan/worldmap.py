"""Occupancy-grid world model: grids, distance fields, frames, grid file formats."""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class WorldGenerationError(RuntimeError):
    """Raised when rejection sampling cannot place the requested obstacles."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t <= 0.0:
        t += 2.0 * math.pi
    return t - math.pi


@dataclass
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        self.theta = wrap_angle(float(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass
class OccupancyGrid:
    """Boolean occupancy grid, row-major; cells[row, col], row indexes +y.

    origin is the world position of the lower-left corner of cell (0, 0); the
    center of cell (row, col) sits at origin + ((col + 0.5)*res, (row + 0.5)*res).
    Everything outside the map counts as Occupied.
    """

    resolution: float
    origin: tuple[float, float]
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=bool)
        if self.cells.ndim != 2:
            raise ValueError("cells must be a 2-D array")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def height_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def width_cells(self) -> int:
        return self.cells.shape[1]

    def cell_of(self, point) -> tuple[int, int]:
        """(row, col) of the cell containing a world point (may be out of bounds)."""
        col = math.floor((point[0] - self.origin[0]) / self.resolution)
        row = math.floor((point[1] - self.origin[1]) / self.resolution)
        return row, col

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.cells.shape[0] and 0 <= col < self.cells.shape[1]

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return np.array(
            [
                self.origin[0] + (col + 0.5) * self.resolution,
                self.origin[1] + (row + 0.5) * self.resolution,
            ]
        )

    def is_occupied(self, point) -> bool:
        """Occupancy at a world point; anything outside the map is Occupied."""
        row, col = self.cell_of(point)
        if not self.in_bounds(row, col):
            return True
        return bool(self.cells[row, col])

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid arrays (xs, ys) of all cell-center coordinates."""
        xs = self.origin[0] + (np.arange(self.width_cells) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height_cells) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)


@dataclass
class DistanceField:
    """Per-cell Euclidean distance (meters) to the nearest Occupied cell center."""

    resolution: float
    origin: tuple[float, float]
    values: np.ndarray

    def at(self, point) -> float:
        """Field value of the cell containing a world point; outside the map -> 0."""
        col = math.floor((point[0] - self.origin[0]) / self.resolution)
        row = math.floor((point[1] - self.origin[1]) / self.resolution)
        if not (0 <= row < self.values.shape[0] and 0 <= col < self.values.shape[1]):
            return 0.0
        return float(self.values[row, col])

    def at_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized containing-cell lookup; out-of-map points get 0."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        cols = np.floor((pts[:, 0] - self.origin[0]) / self.resolution).astype(int)
        rows = np.floor((pts[:, 1] - self.origin[1]) / self.resolution).astype(int)
        ok = (
            (rows >= 0)
            & (rows < self.values.shape[0])
            & (cols >= 0)
            & (cols < self.values.shape[1])
        )
        out = np.zeros(len(pts))
        out[ok] = self.values[rows[ok], cols[ok]]
        return out


def distance_field(grid: OccupancyGrid) -> DistanceField:
    """Exact Euclidean distance transform of the grid, in meters.

    Occupied cells get 0. A grid with no Occupied cell gets +inf everywhere.
    """
    if not grid.cells.any():
        values = np.full(grid.cells.shape, np.inf)
    else:
        values = ndimage.distance_transform_edt(~grid.cells) * grid.resolution
    return DistanceField(grid.resolution, grid.origin, values)


def generate_random_world(
    seed: int,
    side: float = 10.0,
    n_obstacles: int = 10,
    radius_range: tuple[float, float] = (0.3, 0.6),
    start=(-4.0, -4.0),
    goal=(4.0, 4.0),
    resolution: float = 0.1,
    robot_radius: float = 0.15,
    border_walls: bool = False,
) -> OccupancyGrid:
    """Square world with non-overlapping circular obstacles.

    Obstacles keep a separation of 2*robot_radius from each other (so a disc of the
    robot's size can pass between any pair before grid inflation) and keep a
    clearance disc of robot_radius + 2*resolution free around start and goal.
    Placement is rejection sampling with a 10,000-attempt cap.
    """
    n = int(round(side / resolution))
    origin = (-side / 2.0, -side / 2.0)
    cells = np.zeros((n, n), dtype=bool)
    rng = np.random.default_rng(seed)

    lo, hi = radius_range
    inset = resolution if border_walls else 0.0
    placed: list[tuple[float, float, float]] = []
    attempts = 0
    while len(placed) < n_obstacles:
        if attempts >= 10000:
            raise WorldGenerationError(
                f"could not place {n_obstacles} obstacles after 10000 attempts "
                f"(seed {seed})"
            )
        attempts += 1
        r = float(rng.uniform(lo, hi))
        cx = float(rng.uniform(origin[0] + r + inset, origin[0] + side - r - inset))
        cy = float(rng.uniform(origin[1] + r + inset, origin[1] + side - r - inset))
        ok = True
        for px, py, pr in placed:
            if math.hypot(cx - px, cy - py) <= r + pr + 2.0 * robot_radius:
                ok = False
                break
        if ok:
            for qx, qy in (start, goal):
                if math.hypot(cx - qx, cy - qy) <= r + robot_radius + 2.0 * resolution:
                    ok = False
                    break
        if ok:
            placed.append((cx, cy, r))

    if placed:
        xs, ys = np.meshgrid(
            origin[0] + (np.arange(n) + 0.5) * resolution,
            origin[1] + (np.arange(n) + 0.5) * resolution,
        )
        for cx, cy, r in placed:
            cells |= (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    if border_walls:
        cells[0, :] = True
        cells[-1, :] = True
        cells[:, 0] = True
        cells[:, -1] = True
    return OccupancyGrid(resolution, origin, cells)


def egocentric_crop(grid: OccupancyGrid, center, width: float) -> OccupancyGrid:
    """Axis-aligned square crop centered on the cell containing `center`.

    Regions outside the source map come back Occupied.
    """
    xy = center.xy if isinstance(center, Pose) else np.asarray(center, dtype=float)
    half = int(round(width / (2.0 * grid.resolution)))
    row0, col0 = grid.cell_of(xy)
    rows = np.arange(row0 - half, row0 + half)
    cols = np.arange(col0 - half, col0 + half)
    out = np.ones((len(rows), len(cols)), dtype=bool)
    rok = (rows >= 0) & (rows < grid.height_cells)
    cok = (cols >= 0) & (cols < grid.width_cells)
    if rok.any() and cok.any():
        out[np.ix_(rok, cok)] = grid.cells[np.ix_(rows[rok], cols[cok])]
    crop_origin = (
        grid.origin[0] + (col0 - half) * grid.resolution,
        grid.origin[1] + (row0 - half) * grid.resolution,
    )
    return OccupancyGrid(grid.resolution, crop_origin, out)


def to_local_frame(pose: Pose, points) -> np.ndarray:
    """World points -> robot frame (x forward along pose.theta, y left)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    d = pts - np.array([pose.x, pose.y])
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])


def from_local_frame(pose: Pose, points) -> np.ndarray:
    """Robot-frame points -> world frame (inverse of to_local_frame)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return np.column_stack(
        [
            pose.x + c * pts[:, 0] - s * pts[:, 1],
            pose.y + s * pts[:, 0] + c * pts[:, 1],
        ]
    )


# --- file formats ---


def grid_to_dict(grid: OccupancyGrid) -> dict:
    """JSON-ready dict with a base64, row-major, bit-packed cell payload."""
    packed = np.packbits(grid.cells.flatten())
    return {
        "width_cells": grid.width_cells,
        "height_cells": grid.height_cells,
        "resolution": grid.resolution,
        "origin": [grid.origin[0], grid.origin[1]],
        "cells": base64.b64encode(packed.tobytes()).decode("ascii"),
    }


def grid_from_dict(data: dict) -> OccupancyGrid:
    w = int(data["width_cells"])
    h = int(data["height_cells"])
    raw = np.frombuffer(base64.b64decode(data["cells"]), dtype=np.uint8)
    bits = np.unpackbits(raw)[: w * h].astype(bool).reshape(h, w)
    return OccupancyGrid(float(data["resolution"]), tuple(data["origin"]), bits)


def save_grid(grid: OccupancyGrid, path) -> None:
    with open(path, "w") as f:
        json.dump(grid_to_dict(grid), f, indent=2, sort_keys=True)
        f.write("\n")


def load_grid(path) -> OccupancyGrid:
    with open(path) as f:
        return grid_from_dict(json.load(f))


def load_pgm(path, resolution: float, origin=(0.0, 0.0), threshold: int = 128) -> OccupancyGrid:
    """Import a PGM (P2 ascii or P5 binary) map; pixels < threshold become Occupied."""
    with open(path, "rb") as f:
        data = f.read()

    def tokens():
        i = 0
        while i < len(data):
            if data[i : i + 1] == b"#":
                while i < len(data) and data[i : i + 1] != b"\n":
                    i += 1
            elif data[i : i + 1].isspace():
                i += 1
            else:
                j = i
                while j < len(data) and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                    j += 1
                yield i, data[i:j]
                i = j

    it = tokens()
    try:
        _, magic = next(it)
        _, w_tok = next(it)
        _, h_tok = next(it)
        pos, maxval_tok = next(it)
    except StopIteration:
        raise ValueError("truncated PGM header") from None
    magic = magic.decode("ascii")
    w, h, maxval = int(w_tok), int(h_tok), int(maxval_tok)
    if magic not in ("P2", "P5"):
        raise ValueError(f"unsupported PGM magic {magic!r}")
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    if magic == "P5":
        start = pos + len(maxval_tok) + 1
        pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=start)
    else:
        vals = [int(v) for _, v in it]
        if len(vals) != w * h:
            raise ValueError("PGM pixel count mismatch")
        pixels = np.array(vals, dtype=np.uint8)
    img = pixels.reshape(h, w)
    # PGM rows run top to bottom; grid rows index +y, so flip vertically.
    occupied = np.flipud(img < threshold)
    return OccupancyGrid(resolution, tuple(origin), occupied)
