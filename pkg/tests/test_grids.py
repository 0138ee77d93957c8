import numpy as np
import numpy.testing as npt
import pytest

from deepmusic import AngularGrid, Partition, make_grid, partition_grid


def test_paper_scale_grid_resolution():
    grid = make_grid(-60.0, 60.0, 4096)
    assert grid.resolution_deg == 120.0 / 4096
    npt.assert_allclose(grid.resolution_deg, 0.029296875)


def test_one_degree_grid_layout():
    grid = make_grid(-60.0, 60.0, 120)
    assert grid.resolution_deg == 1.0
    angles = grid.angles()
    assert angles[0] == -60.0
    assert angles[-1] == 59.0


def test_quarter_grid_points():
    npt.assert_array_equal(make_grid(0.0, 1.0, 4).angles(), [0.0, 0.25, 0.5, 0.75])


def test_grid_validation():
    with pytest.raises(ValueError):
        make_grid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        make_grid(10.0, -10.0, 8)


def test_index_angle_inverse_on_grid_points():
    rng = np.random.default_rng(1)
    for _ in range(5):
        start = rng.uniform(-80.0, 0.0)
        final = start + rng.uniform(1.0, 100.0)
        n = int(rng.integers(2, 600))
        grid = make_grid(start, final, n)
        for i in rng.integers(0, n, size=20):
            assert grid.index_of(grid.angle_at(int(i))) == int(i)


def test_index_of_clips_outside():
    grid = make_grid(-60.0, 60.0, 120)
    assert grid.index_of(-500.0) == 0
    assert grid.index_of(500.0) == 119


def test_paper_scale_partition():
    part = partition_grid(make_grid(-60.0, 60.0, 4096), 8)
    assert part.region_len == 512
    lo, hi = part.region_bounds[0]
    npt.assert_allclose([lo, hi], [-60.0, -45.0])


def test_single_region_partition_covers_grid():
    grid = make_grid(-60.0, 60.0, 128)
    part = partition_grid(grid, 1)
    assert part.region_len == 128
    npt.assert_allclose(part.region_bounds[0], (-60.0, 60.0))
    npt.assert_array_equal(part.region_angles(0), grid.angles())


def test_small_partition_index_ranges():
    part = partition_grid(make_grid(0.0, 8.0, 8), 4)
    slices = [part.region_slice(q) for q in range(4)]
    assert [(s.start, s.stop) for s in slices] == [(0, 2), (2, 4), (4, 6), (6, 8)]
    joined = np.concatenate([np.arange(8)[s] for s in slices])
    npt.assert_array_equal(joined, np.arange(8))


def test_region_boundaries_coincide():
    part = partition_grid(make_grid(-60.0, 60.0, 512), 8)
    for q in range(7):
        assert part.region_bounds[q][1] == part.region_bounds[q + 1][0]


def test_partition_rejects_nondividing_region_count():
    with pytest.raises(ValueError):
        partition_grid(make_grid(-60.0, 60.0, 100), 8)


def test_region_of_angles():
    part = partition_grid(make_grid(-60.0, 60.0, 512), 8)
    assert part.region_of(-60.0) == 0
    assert part.region_of(-45.0) == 1
    assert part.region_of(59.9) == 7
    with pytest.raises(ValueError):
        part.region_of(60.0)
    with pytest.raises(ValueError):
        part.region_of(-60.1)


def test_region_of_matches_bounds():
    part = partition_grid(make_grid(-60.0, 60.0, 512), 8)
    rng = np.random.default_rng(5)
    for theta in rng.uniform(-60.0, 59.99, size=50):
        q = part.region_of(theta)
        lo, hi = part.region_bounds[q]
        assert lo <= theta < hi
