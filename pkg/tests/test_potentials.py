import numpy as np
import pytest

from partialstab.geometry import Ball, build_grid
from partialstab.potentials import (Constant, GaussianBump, Sum, TrigMode, make_family, on_grid, read_grid_field,
                                    read_potential, smooth_taper, write_grid_field)


def test_taper_vanishes_on_boundary():
    x = np.array([[0.5, 0.1, 0.0], [0.0, -0.5, 0.2], [0.0, 0.0, 0.0]])
    assert np.allclose(smooth_taper(x), [0.0, 0.0, 1.0])


def test_families():
    x = np.zeros((1, 3))
    assert make_family("gaussian", amplitude=2.0)(x)[0] == pytest.approx(2.0)
    assert make_family("trig", amplitude=1.5, wavevector=(1, 0, 0))(x)[0] == pytest.approx(1.5)
    assert make_family("constant", value=4.0)(x)[0] == 4.0
    with pytest.raises(ValueError):
        make_family("nope")


def test_sum_adds_terms():
    x = np.random.default_rng(0).uniform(-0.4, 0.4, size=(5, 3))
    a, b = GaussianBump(1.0, (0, 0, 0), 0.2), TrigMode(0.5, (3.0, 0, 0))
    assert np.allclose(Sum((a, b, Constant(1.0)))(x), a(x) + b(x) + 1.0)


@pytest.mark.parametrize("cplx", [False, True])
def test_grid_field_roundtrip(tmp_path, cube8, rng, cplx):
    v = rng.normal(size=cube8.n_interior)
    if cplx:
        v = v + 1j * rng.normal(size=cube8.n_interior)
    write_grid_field(tmp_path / "f.txt", cube8, v)
    g, w = read_grid_field(tmp_path / "f.txt")
    assert g.hash == cube8.hash and np.array_equal(v, w)


def test_ball_grid_field_roundtrip(tmp_path):
    g = build_grid(3, Ball((0, 0, 0), 0.5), 0.1)
    q = on_grid(GaussianBump(1.0, (0, 0, 0), 0.2, taper=False), g, s=3)
    write_grid_field(tmp_path / "b.txt", g, q.values)
    r = read_potential(tmp_path / "b.txt", s=3)
    assert r.hash == q.hash


def test_count_mismatch_rejected(tmp_path, cube8):
    write_grid_field(tmp_path / "f.txt", cube8, np.zeros(cube8.n_interior))
    lines = (tmp_path / "f.txt").read_text().splitlines()[:-1]
    (tmp_path / "f.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        read_grid_field(tmp_path / "f.txt")
