import math

import numpy as np
import pytest

from coneplan.intent import (
    DegenerateHeadingError,
    HistoryBuffer,
    IntentionDomain,
    InvalidDomainError,
    buffer_axis,
    base_samples,
    cone_contains,
    cone_contains_many,
    predict_subgoal,
)
from coneplan.worldmap import DistanceField, OccupancyGrid, distance_field

from oracles import point_in_triangle


def open_field(side=20.0, res=0.1):
    n = int(side / res)
    g = OccupancyGrid(res, (-side / 2, -side / 2), np.zeros((n, n), dtype=bool))
    return distance_field(g)


class TestHistoryBuffer:
    def test_push_spacing(self):
        buf = HistoryBuffer(capacity=5, spacing=0.1)
        assert buf.push((0.0, 0.0))
        assert not buf.push((0.05, 0.0))
        assert buf.push((0.1, 0.0))
        assert len(buf) == 2

    def test_fifo_and_full(self):
        buf = HistoryBuffer(capacity=3, spacing=0.1)
        for i in range(5):
            buf.push((0.11 * i, 0.0))
        assert buf.full and len(buf) == 3
        assert np.allclose(buf.points()[0], [0.22, 0.0])
        assert np.allclose(buf.points()[-1], [0.44, 0.0])

    def test_clear(self):
        buf = HistoryBuffer(capacity=3, spacing=0.1)
        buf.push((0.0, 0.0))
        buf.clear()
        assert len(buf) == 0 and not buf.full

    def test_consecutive_spacing_invariant(self):
        rng = np.random.default_rng(7)
        buf = HistoryBuffer(capacity=20, spacing=0.1)
        p = np.zeros(2)
        for _ in range(400):
            p = p + rng.uniform(-0.06, 0.06, size=2)
            buf.push(p)
        pts = buf.points()
        gaps = np.hypot(*(pts[1:] - pts[:-1]).T)
        assert (gaps >= 0.1 - 1e-12).all()


class TestBufferAxis:
    def test_straight(self):
        buf = HistoryBuffer(capacity=5, spacing=0.1)
        for p in [(0.0, 0.0), (0.1, 0.0), (0.2, 0.0)]:
            buf.push(p)
        assert np.allclose(buffer_axis(buf, m=2), [1.0, 0.0])

    def test_diagonal(self):
        buf = HistoryBuffer(capacity=5, spacing=0.1)
        for p in [(0.0, 0.0), (0.1, 0.0), (0.1, 0.1)]:
            buf.push(p)
        assert np.allclose(buffer_axis(buf, m=2), [1 / math.sqrt(2), 1 / math.sqrt(2)])

    def test_degenerate(self):
        buf = HistoryBuffer(capacity=5, spacing=0.1)
        buf._pts = [(0.0, 0.0), (0.1, 0.0), (0.0, 0.0)]
        with pytest.raises(DegenerateHeadingError):
            buffer_axis(buf, m=2)

    def test_needs_m_plus_one(self):
        buf = HistoryBuffer(capacity=5, spacing=0.1)
        buf.push((0.0, 0.0))
        buf.push((0.1, 0.0))
        with pytest.raises(ValueError):
            buffer_axis(buf, m=2)


class TestCone:
    def test_membership_hand_values(self):
        dom = IntentionDomain(apex=(0.0, 0.0), axis=(1.0, 0.0), h=2.0, r=1.0)
        assert cone_contains(dom, (1.0, 0.4))
        assert not cone_contains(dom, (1.0, 0.6))
        assert not cone_contains(dom, (-0.1, 0.0))
        assert cone_contains(dom, (2.0, 1.0))  # base corner on the boundary
        assert cone_contains(dom, (0.0, 0.0))  # apex
        assert not cone_contains(dom, (2.1, 0.0))

    def test_phi(self):
        dom = IntentionDomain(apex=(0.0, 0.0), axis=(0.0, 1.0), h=1.0, r=1.0)
        assert dom.phi == pytest.approx(math.pi / 4)
        assert 0.0 <= IntentionDomain((0, 0), (1, 0), 2.5, 0.0).phi < math.pi / 2

    def test_validation(self):
        with pytest.raises(ValueError):
            IntentionDomain((0, 0), (0, 0), 1.0, 0.5)
        with pytest.raises(ValueError):
            IntentionDomain((0, 0), (1, 0), 0.0, 0.5)
        with pytest.raises(ValueError):
            IntentionDomain((0, 0), (1, 0), 1.0, -0.1)

    def test_matches_triangle_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            apex = rng.uniform(-2, 2, size=2)
            ang = rng.uniform(-math.pi, math.pi)
            axis = np.array([math.cos(ang), math.sin(ang)])
            h = rng.uniform(0.5, 2.5)
            r = rng.uniform(0.05, h * math.tan(math.radians(80)))
            dom = IntentionDomain(apex, axis, h, r)
            v = dom.normal
            a, b, c = apex, apex + h * axis + r * v, apex + h * axis - r * v
            pts = rng.uniform(-5, 5, size=(300, 2))
            got = cone_contains_many(dom, pts)
            # skip points within 1e-6 of the triangle boundary: both answers legal
            for p, g in zip(pts, got):
                inside = point_in_triangle(p, a, b, c, eps=0.0)
                loose = point_in_triangle(p, a, b, c, eps=1e-6)
                if inside == loose and g != inside:
                    strict = point_in_triangle(p, a, b, c, eps=-1e-6)
                    if strict == inside:
                        raise AssertionError(f"cone/triangle disagree at {p}")

    def test_scalar_and_vector_agree(self):
        rng = np.random.default_rng(4)
        dom = IntentionDomain((0.3, -0.2), (0.6, 0.8), 1.5, 0.9)
        pts = rng.uniform(-3, 3, size=(200, 2))
        vec = cone_contains_many(dom, pts)
        assert all(cone_contains(dom, p) == v for p, v in zip(pts, vec))


class TestPredictSubgoal:
    def test_nearest_base_sample(self):
        dom = IntentionDomain((0.0, 0.0), (1.0, 0.0), 1.0, 0.5)
        sg = predict_subgoal(dom, open_field(), (5.0, 1.0), robot_radius=0.15)
        assert np.allclose(sg, [1.0, 0.5], atol=1e-9)

    def test_goal_on_axis_prefers_center(self):
        dom = IntentionDomain((0.0, 0.0), (1.0, 0.0), 1.0, 0.5)
        sg = predict_subgoal(dom, open_field(), (5.0, 0.0), robot_radius=0.15)
        assert np.allclose(sg, [1.0, 0.0], atol=1e-9)

    def test_blocked_base_raises(self):
        n = 40
        g = OccupancyGrid(0.1, (-2.0, -2.0), np.ones((n, n), dtype=bool))
        dom = IntentionDomain((0.0, 0.0), (1.0, 0.0), 1.0, 0.5)
        with pytest.raises(InvalidDomainError, match="intention domain invalid"):
            predict_subgoal(dom, distance_field(g), (5.0, 0.0), robot_radius=0.15)

    def test_base_samples_include_endpoints(self):
        dom = IntentionDomain((0.0, 0.0), (1.0, 0.0), 1.0, 0.55)
        tv, pts = base_samples(dom, spacing=0.1)
        assert tv.min() == pytest.approx(-0.55)
        assert tv.max() == pytest.approx(0.55)
        assert len(tv) == len(pts)
        dom0 = IntentionDomain((0.0, 0.0), (1.0, 0.0), 1.0, 0.0)
        tv0, pts0 = base_samples(dom0, spacing=0.1)
        assert len(tv0) == 1 and np.allclose(pts0[0], [1.0, 0.0])

    def test_partial_block_picks_clear_side(self):
        n = 60
        cells = np.zeros((n, n), dtype=bool)
        g = OccupancyGrid(0.1, (-3.0, -3.0), cells)
        # wall above the axis near the base
        cells[g.cell_of((1.0, 0.45))[0] :, :] = True
        dom = IntentionDomain((0.0, 0.0), (1.0, 0.0), 1.0, 0.5)
        sg = predict_subgoal(dom, distance_field(g), (5.0, 1.0), robot_radius=0.15)
        assert sg[1] < 0.45
