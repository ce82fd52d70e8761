import numpy as np
import pytest

from partialstab.dnmap import (BoundaryNormCalculus, DNOperator, build_dn, cached_build_dn, export_dn,
                               operator_norm_fractional, restrict_partial, SOLVE_COUNTER)
from partialstab.fields import PotentialField
from partialstab.geometry import partition_boundary
from partialstab.potentials import GaussianBump, on_grid
from partialstab.records import RecordCache, read_record


@pytest.fixture(scope="module")
def bump8(cube8):
    return on_grid(GaussianBump(2.0, (0.05, 0.0, -0.05), 0.15), cube8, s=3)


@pytest.fixture(scope="module")
def calc8(cube8):
    return BoundaryNormCalculus(cube8)


def test_identical_potentials_give_zero_difference(cube8, bump8):
    d = build_dn(cube8, bump8, 2.0) - build_dn(cube8, bump8, 2.0)
    assert np.count_nonzero(d.matrix) == 0


def test_linear_trace_maps_to_normal_component(cube8, zero8):
    dn = build_dn(cube8, zero8, 0.0)
    a = np.array([0.0, 0.6, 0.8])
    assert np.allclose(dn.apply(cube8.face_centers @ a), cube8.face_normals @ a, atol=1e-10)


def test_symmetry_random_potential(cube8, rng):
    q = PotentialField(cube8, rng.uniform(-2, 2, cube8.n_interior), s=3)
    assert build_dn(cube8, q, 2.5).symmetry_defect() < 1e-8


def test_restriction_drops_plus_face(cube8, zero8):
    dn = build_dn(cube8, zero8, 2.0)
    part = partition_boundary(cube8, [1.0, 0, 0], 1e-9)
    r = restrict_partial(dn, part)
    plus_x = set(np.where(np.isclose(cube8.face_normals[:, 0], 1.0))[0])
    assert set(r.rows) == set(range(cube8.n_faces)) - plus_x
    assert np.array_equal(r.rows, part.minus_eps)
    r2 = restrict_partial(r, part)
    assert np.array_equal(r2.rows, r.rows) and np.array_equal(r2.matrix, r.matrix)


def test_restricted_norm_not_larger(cube8, bump8, zero8, calc8):
    d = build_dn(cube8, bump8, 2.0) - build_dn(cube8, zero8, 2.0)
    part = partition_boundary(cube8, [0.0, 0.6, 0.8], 0.1)
    full = operator_norm_fractional(d, calc8, method="svd")
    part_n = operator_norm_fractional(restrict_partial(d, part), calc8, method="svd")
    assert part_n <= full * (1 + 1e-12)


def test_zero_operator_norm(cube8, calc8):
    z = DNOperator(cube8, "z", 1.0, np.zeros((cube8.n_faces, cube8.n_faces)))
    assert operator_norm_fractional(z, calc8) == 0.0


def test_identity_operator_norm_is_one(cube8, calc8):
    eye = DNOperator(cube8, "id", 1.0, np.eye(cube8.n_faces))
    assert operator_norm_fractional(eye, calc8) == pytest.approx(1.0, rel=1e-5)


def test_laplacian_properties(calc8):
    L = calc8.laplacian
    assert np.allclose(L, L.T)
    assert np.allclose(L @ np.ones(len(L)), 0.0)
    assert calc8.eigenvalues.min() >= 0.0
    half = calc8.power(0.5)
    assert np.linalg.norm(half @ half - (np.eye(len(L)) + L)) <= 1e-8 * np.linalg.norm(L)


def test_power_iteration_agrees_with_svd(cube8, bump8, zero8, calc8):
    d = build_dn(cube8, bump8, 2.0) - build_dn(cube8, zero8, 2.0)
    assert operator_norm_fractional(d, calc8) == pytest.approx(operator_norm_fractional(d, calc8, method="svd"),
                                                               rel=1e-5)


def test_norm_linear_in_small_perturbation(cube8, zero8, calc8):
    base = build_dn(cube8, zero8, 2.0)
    bump = GaussianBump(1.0, (0.0, 0.0, 0.0), 0.15)(cube8.interior_points)
    deltas = np.array([1e-3, 2e-3, 4e-3, 8e-3])
    norms = [operator_norm_fractional(build_dn(cube8, PotentialField(cube8, d * bump, s=3), 2.0) - base, calc8)
             for d in deltas]
    slope, icpt = np.polyfit(deltas, norms, 1)
    pred = slope * deltas + icpt
    r2 = 1 - np.sum((norms - pred) ** 2) / np.sum((norms - np.mean(norms)) ** 2)
    assert r2 > 0.99


def test_cache_roundtrip_and_warm_hit(tmp_path, cube8, bump8):
    cache = RecordCache(tmp_path)
    before = SOLVE_COUNTER["dn_builds"]
    a = cached_build_dn(cache, cube8, bump8, 2.0)
    b = cached_build_dn(cache, cube8, bump8, 2.0)
    assert SOLVE_COUNTER["dn_builds"] == before + 1
    assert np.array_equal(a.matrix, b.matrix)
    assert (cache.hits, cache.misses) == (1, 1)


def test_export_record(tmp_path, cube8, zero8):
    dn = build_dn(cube8, zero8, 1.0)
    export_dn(dn, tmp_path / "dn.pstb")
    arr, meta = read_record(tmp_path / "dn.pstb")
    assert np.allclose(arr.real, dn.matrix)
    assert meta["row_faces"] == list(range(cube8.n_faces))
