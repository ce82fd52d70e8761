import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partialstab.fields import (PotentialField, fourier_transform, l2_norm, sobolev_norm, zero_potential)
from partialstab.potentials import GaussianBump, on_grid


def test_zero_potential_has_zero_norms(cube8):
    q = zero_potential(cube8, s=3, M=1.0)
    assert q.sobolev_norm() == 0.0 and q.linfty() == 0.0 and q.is_admissible()


def test_l2_matches_sobolev_zero(cube8, rng):
    v = rng.normal(size=cube8.n_interior)
    assert sobolev_norm(cube8, v, 0) == pytest.approx(l2_norm(cube8, v), rel=1e-10)


def test_sobolev_norm_monotone_in_s(cube8):
    q = on_grid(GaussianBump(1.0, (0, 0, 0), 0.1), cube8, s=3)
    norms = [q.sobolev_norm(s) for s in (-1, 0, 1, 2, 3)]
    assert all(a <= b for a, b in zip(norms, norms[1:]))


def test_fourier_transform_of_gaussian(cube16):
    w = 0.08
    q = GaussianBump(1.0, (0, 0, 0), w, taper=False)(cube16.interior_points)
    xi = np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 4.0, 2.0]])
    exact = (2 * np.pi) ** 1.5 * w ** 3 * np.exp(-0.5 * w ** 2 * np.sum(xi ** 2, axis=1))
    assert np.allclose(fourier_transform(cube16, q, xi), exact, rtol=1e-3)


def test_smoothness_floor(cube8):
    with pytest.raises(ValueError):
        PotentialField(cube8, np.zeros(cube8.n_interior), s=1)


def test_values_are_read_only_and_hash_stable(cube8, rng):
    v = rng.normal(size=cube8.n_interior)
    a, b = PotentialField(cube8, v, s=2), PotentialField(cube8, v.copy(), s=2)
    assert a.hash == b.hash
    with pytest.raises(ValueError):
        a.values[0] = 1.0


def test_wrong_length_rejected(cube8):
    with pytest.raises(ValueError):
        PotentialField(cube8, np.zeros(cube8.n_interior + 1))


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_sobolev_norm_is_homogeneous_and_subadditive(a, b):
    from partialstab.geometry import unit_cube
    g = unit_cube(0.25)
    r = np.random.default_rng(3)
    u, v = r.normal(size=g.n_interior), r.normal(size=g.n_interior)
    assert sobolev_norm(g, a * u, 1) == pytest.approx(abs(a) * sobolev_norm(g, u, 1), rel=1e-9, abs=1e-12)
    assert sobolev_norm(g, a * u + b * v, 1) <= abs(a) * sobolev_norm(g, u, 1) + abs(b) * sobolev_norm(g, v, 1) + 1e-9
