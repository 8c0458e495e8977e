"""Operator-intention model: motion history, truncated-cone domains, subgoal choice."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .worldmap import DistanceField


class DegenerateHeadingError(RuntimeError):
    """Raised when the recent displacements sum to (numerically) zero."""


class InvalidDomainError(RuntimeError):
    """Raised when an intention domain offers no collision-free base sample."""


@dataclass
class HistoryBuffer:
    """Ring buffer of operator-driven positions, spaced at least `spacing` apart.

    The first push after a clear always stores; later pushes store only when the
    robot has moved at least `spacing` from the last stored point. The buffer is
    cleared whenever the operator is not intervening.
    """

    capacity: int = 20
    spacing: float = 0.1
    _pts: list = field(default_factory=list, repr=False)

    def push(self, point) -> bool:
        """Store the point if it qualifies; returns True when stored."""
        p = (float(point[0]), float(point[1]))
        if self._pts:
            lx, ly = self._pts[-1]
            if math.hypot(p[0] - lx, p[1] - ly) < self.spacing:
                return False
        self._pts.append(p)
        if len(self._pts) > self.capacity:
            del self._pts[0]
        return True

    def clear(self) -> None:
        self._pts.clear()

    def __len__(self) -> int:
        return len(self._pts)

    @property
    def full(self) -> bool:
        return len(self._pts) == self.capacity

    def points(self) -> np.ndarray:
        """Stored points oldest to newest, shape (n, 2)."""
        return np.array(self._pts, dtype=float).reshape(-1, 2)


def buffer_axis(buffer: HistoryBuffer, m: int = 5) -> np.ndarray:
    """Unit heading from the sum of the last m displacements (telescopes to
    newest minus m-back)."""
    pts = buffer.points()
    if len(pts) < m + 1:
        raise ValueError(f"need at least {m + 1} buffered points, have {len(pts)}")
    d = pts[-1] - pts[-(m + 1)]
    n = float(np.hypot(d[0], d[1]))
    if n < 1e-9:
        raise DegenerateHeadingError("recent displacements sum to zero")
    return d / n


@dataclass
class IntentionDomain:
    """Truncated cone: apex p, unit axis u, height h, base half-width r.

    Contains p + s*u + t*v for s in [0, h], |t| <= (r/h)*s, with v the left
    normal of u. Half-opening angle phi = atan(r/h) lies in [0, pi/2).
    """

    apex: np.ndarray
    axis: np.ndarray
    h: float
    r: float

    def __post_init__(self):
        self.apex = np.asarray(self.apex, dtype=float).reshape(2)
        axis = np.asarray(self.axis, dtype=float).reshape(2)
        n = float(np.hypot(axis[0], axis[1]))
        if n < 1e-9:
            raise ValueError("axis must be a nonzero vector")
        self.axis = axis / n
        self.h = float(self.h)
        self.r = float(self.r)
        if self.h <= 0.0:
            raise ValueError("height h must be positive")
        if self.r < 0.0:
            raise ValueError("base half-width r must be nonnegative")

    @property
    def phi(self) -> float:
        """Half-opening angle, radians."""
        return math.atan2(self.r, self.h)

    @property
    def normal(self) -> np.ndarray:
        """Left normal v of the axis."""
        return np.array([-self.axis[1], self.axis[0]])

    def to_dict(self) -> dict:
        return {
            "apex": [self.apex[0], self.apex[1]],
            "axis": [self.axis[0], self.axis[1]],
            "h": self.h,
            "r": self.r,
        }


_EPS = 1e-9


def cone_contains(domain: IntentionDomain, point) -> bool:
    """Inclusive membership test for one point."""
    d = np.asarray(point, dtype=float).reshape(2) - domain.apex
    s = float(d @ domain.axis)
    if s < -_EPS or s > domain.h + _EPS:
        return False
    t = float(d @ domain.normal)
    return abs(t) <= (domain.r / domain.h) * s + _EPS


def cone_contains_many(domain: IntentionDomain, points, inflate: float = 0.0) -> np.ndarray:
    """Vectorized membership test, shape (n,) bool.

    `inflate` dilates the cone by that distance (used by grid rasterization so a
    cell counts as inside when the cone touches it, not only its center).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2) - domain.apex
    s = pts @ domain.axis
    t = pts @ domain.normal
    half = (domain.r / domain.h) * np.clip(s, 0.0, domain.h) + inflate
    return (s >= -inflate - _EPS) & (s <= domain.h + inflate + _EPS) & (np.abs(t) <= half + _EPS)


def base_samples(domain: IntentionDomain, spacing: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Discretized base segment: returns (t_values, points).

    t runs over the symmetric grid k*spacing clipped to [-r, r], endpoints included.
    """
    k = int(math.floor(domain.r / spacing + 1e-9))
    ts = [i * spacing for i in range(-k, k + 1)]
    if domain.r > 0 and (not ts or abs(ts[-1] - domain.r) > 1e-12):
        ts = [-domain.r] + ts + [domain.r]
    tv = np.array(ts if ts else [0.0])
    base = domain.apex + domain.h * domain.axis
    pts = base[None, :] + tv[:, None] * domain.normal[None, :]
    return tv, pts


def predict_subgoal(
    domain: IntentionDomain,
    dfield: DistanceField,
    goal,
    robot_radius: float,
    spacing: float = 0.1,
) -> np.ndarray:
    """Collision-free base sample nearest the final goal.

    Ties on goal distance prefer smaller |t|, then smaller t. Raises
    InvalidDomainError when no base sample is collision-free at robot_radius
    inflation ("intention domain invalid").
    """
    gf = np.asarray(goal, dtype=float).reshape(2)
    tv, pts = base_samples(domain, spacing)
    clear = dfield.at_many(pts) > robot_radius
    if not clear.any():
        raise InvalidDomainError("intention domain invalid: no collision-free base sample")
    cand_t = tv[clear]
    cand_p = pts[clear]
    dist = np.hypot(cand_p[:, 0] - gf[0], cand_p[:, 1] - gf[1])
    order = np.lexsort((cand_t, np.abs(cand_t), np.round(dist, 12)))
    return cand_p[order[0]]
