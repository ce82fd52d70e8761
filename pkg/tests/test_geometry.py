import numpy as np
import pytest

from partialstab.geometry import Ball, Box, build_grid, grid_from_spec, partition_boundary, unit_cube


def test_square_counts():
    g = build_grid(2, Box((0, 0), (0.5, 0.5)), 0.25)
    assert g.n_interior == 9
    assert g.n_faces == 16


def test_cube_coarse_counts():
    g = unit_cube(0.5)
    assert g.n_interior == 1
    assert g.n_faces == 24


def test_cube_face_enumeration_oracle():
    # each of the six sides is split into (1/h)^2 square cells
    for h in (0.5, 0.25, 0.125):
        g = unit_cube(h)
        assert g.n_faces == 6 * round(1 / h) ** 2
        assert g.n_interior == (round(1 / h) - 1) ** 3


@pytest.mark.parametrize("h", [0.0, -0.1, float("nan")])
def test_bad_spacing(h):
    with pytest.raises(ValueError):
        unit_cube(h)


def test_normals_are_unit(cube8):
    assert np.allclose(np.linalg.norm(cube8.face_normals, axis=1), 1.0, atol=1e-12)
    ball = build_grid(3, Ball((0, 0, 0), 1.0), 0.1)
    assert np.allclose(np.linalg.norm(ball.face_normals, axis=1), 1.0, atol=1e-12)


def test_box_area_first_order():
    errs = [abs(unit_cube(h).face_area.sum() - 6.0) for h in (1 / 4, 1 / 8, 1 / 16)]
    assert errs[1] <= 0.6 * errs[0] and errs[2] <= 0.6 * errs[1]


def test_ball_area_converges():
    errs = [abs(build_grid(3, Ball((0, 0, 0), 1.0), h).face_area.sum() - 4 * np.pi) / (4 * np.pi)
            for h in (0.1, 0.05)]
    assert errs[1] < errs[0] < 0.2


def test_radius_bound(cube8):
    assert cube8.R >= 1.0
    assert cube8.R >= np.linalg.norm(cube8.face_centers, axis=1).max()


def test_describe_roundtrip(cube8):
    g = grid_from_spec(cube8.describe())
    assert g.hash == cube8.hash
    assert np.array_equal(g.face_centers, cube8.face_centers)


def test_partition_cube_eps_half(cube8):
    p = partition_boundary(cube8, [1.0, 0, 0], 0.5)
    plus_x = np.where(np.isclose(cube8.face_normals[:, 0], 1.0))[0]
    assert np.array_equal(p.plus_eps, plus_x)
    assert len(p.minus_eps) == cube8.n_faces - len(plus_x)


def test_partition_eps_near_one(cube8):
    p = partition_boundary(cube8, [1.0, 0, 0], 0.999)
    assert np.all(np.isclose(cube8.face_normals[p.plus_eps, 0], 1.0))
    assert len(p.plus_eps) == 64


def test_partition_set_algebra(cube8, rng):
    a = rng.normal(size=3)
    p = partition_boundary(cube8, a / np.linalg.norm(a), 0.2)
    assert set(p.plus_eps) <= set(p.plus)
    assert set(p.minus) <= set(p.minus_eps)
    assert set(p.plus_eps) | set(p.minus_eps) == set(range(cube8.n_faces))
    assert not set(p.plus_eps) & set(p.minus_eps)


def test_partition_ball_hemisphere():
    g = build_grid(3, Ball((0, 0, 0), 1.0), 0.05)
    p = partition_boundary(g, [1.0, 0, 0], 1e-6)
    assert abs(p.measure(g) - 2 * np.pi) / (2 * np.pi) < 0.05


def test_partition_rejects_bad_alpha(cube8):
    with pytest.raises(ValueError):
        partition_boundary(cube8, [1.0, 1.0, 0], 0.1)
    with pytest.raises(ValueError):
        partition_boundary(cube8, [1.0, 0, 0], 1.5)
