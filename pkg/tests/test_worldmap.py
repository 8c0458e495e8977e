import json
import math

import numpy as np
import pytest

from coneplan.worldmap import (
    DistanceField,
    OccupancyGrid,
    Pose,
    WorldGenerationError,
    distance_field,
    egocentric_crop,
    from_local_frame,
    generate_random_world,
    grid_from_dict,
    grid_to_dict,
    load_grid,
    load_pgm,
    save_grid,
    to_local_frame,
    wrap_angle,
)

from oracles import brute_distance_field


def test_wrap_angle_range():
    for t in np.linspace(-12.0, 12.0, 400):
        w = wrap_angle(t)
        assert -math.pi < w <= math.pi
        assert abs(math.remainder(w - t, 2 * math.pi)) < 1e-12
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_empty_world_is_all_free():
    g = generate_random_world(seed=7, side=10.0, n_obstacles=0)
    assert g.width_cells == 100 and g.height_cells == 100
    assert g.resolution == 0.1
    assert g.origin == (-5.0, -5.0)
    assert not g.cells.any()


def test_world_generation_deterministic():
    a = generate_random_world(seed=42, side=6.0, n_obstacles=6, radius_range=(0.2, 0.4))
    b = generate_random_world(seed=42, side=6.0, n_obstacles=6, radius_range=(0.2, 0.4))
    c = generate_random_world(seed=43, side=6.0, n_obstacles=6, radius_range=(0.2, 0.4))
    assert np.array_equal(a.cells, b.cells)
    assert not np.array_equal(a.cells, c.cells)


def test_world_keeps_start_goal_clear():
    start, goal = (-2.0, -2.0), (2.0, 2.0)
    for seed in range(8):
        g = generate_random_world(
            seed=seed, side=5.0, n_obstacles=5, radius_range=(0.3, 0.5),
            start=start, goal=goal,
        )
        df = distance_field(g)
        assert df.at(start) > 0.15
        assert df.at(goal) > 0.15


def test_impossible_packing_raises_with_seed():
    with pytest.raises(WorldGenerationError, match="seed 3"):
        generate_random_world(seed=3, side=2.0, n_obstacles=40, radius_range=(0.4, 0.5))


def test_border_walls():
    g = generate_random_world(seed=1, side=4.0, n_obstacles=0, border_walls=True)
    assert g.cells[0, :].all() and g.cells[-1, :].all()
    assert g.cells[:, 0].all() and g.cells[:, -1].all()
    assert not g.cells[1:-1, 1:-1].all()


def test_distance_field_single_cell_ring():
    cells = np.zeros((11, 11), dtype=bool)
    cells[5, 5] = True
    df = distance_field(OccupancyGrid(0.1, (0.0, 0.0), cells))
    assert df.values[5, 5] == 0.0
    assert df.values[5, 6] == pytest.approx(0.1)
    assert df.values[6, 6] == pytest.approx(0.1 * math.sqrt(2.0))
    assert df.values[0, 0] == pytest.approx(0.1 * math.sqrt(50.0))
    assert np.array_equal(df.values, brute_distance_field(cells, 0.1))


def test_distance_field_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(25):
        h, w = rng.integers(4, 48, size=2)
        cells = rng.random((h, w)) < rng.uniform(0.02, 0.2)
        df = distance_field(OccupancyGrid(0.1, (0.0, 0.0), cells))
        expect = brute_distance_field(cells, 0.1)
        assert np.allclose(df.values, expect, atol=1e-9)


def test_distance_field_all_free_sentinel():
    g = OccupancyGrid(0.1, (0.0, 0.0), np.zeros((5, 5), dtype=bool))
    assert np.isinf(distance_field(g).values).all()


def test_distance_field_lookup_out_of_map():
    g = generate_random_world(seed=2, side=4.0, n_obstacles=3, radius_range=(0.2, 0.4))
    df = distance_field(g)
    assert df.at((99.0, 99.0)) == 0.0
    assert df.at_many([[99.0, 99.0], [0.0, 0.0]])[0] == 0.0


def test_egocentric_crop_shape_and_alignment():
    g = generate_random_world(seed=5, side=10.0, n_obstacles=8)
    crop = egocentric_crop(g, Pose(0.0, 0.0, 1.3), 5.0)
    assert crop.width_cells == 50 and crop.height_cells == 50
    # same world cell must carry the same occupancy through the crop
    for pt in ([0.3, 0.4], [-1.2, 2.2], [2.05, -2.05]):
        assert crop.is_occupied(pt) == g.is_occupied(pt)


def test_egocentric_crop_out_of_map_occupied():
    g = OccupancyGrid(0.1, (0.0, 0.0), np.zeros((20, 20), dtype=bool))
    crop = egocentric_crop(g, (0.05, 0.05), 2.0)
    # centered near the map corner: three quadrants of the crop fall outside
    assert crop.cells.sum() >= crop.cells.size * 0.7
    assert not crop.is_occupied((0.55, 0.55))


def test_to_local_frame_hand_values():
    local = to_local_frame(Pose(1.0, 1.0, math.pi / 2.0), [[1.0, 2.0]])
    assert np.allclose(local, [[1.0, 0.0]], atol=1e-12)
    local = to_local_frame(Pose(0.0, 0.0, 0.0), [[3.0, -4.0]])
    assert np.allclose(local, [[3.0, -4.0]])


def test_local_frame_roundtrip():
    rng = np.random.default_rng(1)
    for _ in range(50):
        pose = Pose(*rng.uniform(-5, 5, size=2), rng.uniform(-4, 4))
        pts = rng.uniform(-10, 10, size=(7, 2))
        back = from_local_frame(pose, to_local_frame(pose, pts))
        assert np.allclose(back, pts, atol=1e-9)


def test_grid_json_roundtrip(tmp_path):
    g = generate_random_world(seed=11, side=5.0, n_obstacles=5, radius_range=(0.3, 0.5))
    path = tmp_path / "world.json"
    save_grid(g, path)
    loaded = load_grid(path)
    assert np.array_equal(loaded.cells, g.cells)
    assert loaded.resolution == g.resolution
    assert loaded.origin == g.origin
    # serialized form is stable
    save_grid(loaded, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()
    data = json.loads(path.read_text())
    assert set(data) == {"width_cells", "height_cells", "resolution", "origin", "cells"}


def test_pgm_import_p2_p5_equivalent(tmp_path):
    img = np.array([[255, 10, 255], [255, 255, 0]], dtype=np.uint8)
    p2 = tmp_path / "m.p2.pgm"
    p2.write_text("P2\n# comment\n3 2\n255\n" + " ".join(str(v) for v in img.ravel()) + "\n")
    p5 = tmp_path / "m.p5.pgm"
    p5.write_bytes(b"P5\n3 2\n255\n" + img.tobytes())
    a = load_pgm(p2, resolution=0.1)
    b = load_pgm(p5, resolution=0.1)
    assert np.array_equal(a.cells, b.cells)
    # PGM top row is the highest y row; dark pixels are occupied
    assert a.cells[1, 1] and a.cells[0, 2]
    assert a.cells.sum() == 2


def test_pgm_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(ValueError, match="magic"):
        load_pgm(p, resolution=0.1)
