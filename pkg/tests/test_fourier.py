import numpy as np
import pytest

from partialstab.cgo import make_zeta_pair
from partialstab.dnmap import build_dn
from partialstab.fourier import (cgo_pair_fields, data_factor, estimate_fourier_mode, export_modes_csv,
                                 green_identity_sides, plus_side_check, reconstruct, truth_mode,
                                 vessella_continuation_test, weighted_trace_identity, xi_alpha_plan)
from partialstab.geometry import partition_boundary
from partialstab.potentials import GaussianBump, on_grid

ALPHA = np.array([1.0, 0.0, 0.0])


@pytest.fixture(scope="module")
def setup(cube8):
    q1 = on_grid(GaussianBump(3.0, (0.1, 0.0, 0.0), 0.15), cube8, s=3, name="a")
    q2 = on_grid(GaussianBump(-2.0, (-0.1, 0.1, 0.0), 0.12), cube8, s=3, name="b")
    diff = build_dn(cube8, q1, 2.0) - build_dn(cube8, q2, 2.0)
    return q1, q2, diff, partition_boundary(cube8, ALPHA, 0.1)


def test_data_factor_example():
    assert data_factor(1.0, 2.0, 1.0, 1.0) == pytest.approx(6 ** 1.5 * np.e ** 2)


def test_full_boundary_recovers_truth(cube8, setup):
    q1, q2, diff, part = setup
    xi = np.array([0.0, 0.0, 2.0])
    est = estimate_fourier_mode(cube8, xi, 3.0, 2.0, diff, part, q1=q1, q2=q2, dn_gap=1.0)
    truth = truth_mode(q1, q2, xi)
    assert abs(est.value + est.plus_term - truth) < 0.05 * abs(truth)
    assert est.bound == pytest.approx(est.bound_data_term + est.bound_lambda_term)


def test_identical_pair_gives_zero(cube8, setup):
    q1, _, _, part = setup
    diff = build_dn(cube8, q1, 2.0) - build_dn(cube8, q1, 2.0)
    est = estimate_fourier_mode(cube8, [0.0, 1.0, 0.0], 3.0, 2.0, diff, part, q1=q1, q2=q1)
    assert est.value == 0 and est.dn_gap == 0.0 and est.bound_data_term == 0.0


def test_input_checks(cube8, setup):
    q1, q2, diff, part = setup
    with pytest.raises(ValueError, match="orthogonal"):
        estimate_fourier_mode(cube8, [1.0, 0.0, 0.0], 3.0, 2.0, diff, part, q1=q1, q2=q2)
    with pytest.raises(ValueError, match="exceeds"):
        estimate_fourier_mode(cube8, [0.0, 5.0, 0.0], 3.0, 2.0, diff, part, q1=q1, q2=q2)


def test_weighted_trace_identity(cube8, setup):
    q1, q2, _, part = setup
    pair = make_zeta_pair([0, 0, 2], ALPHA, [0, 1, 0], 3.0, 2.0)
    v, _ = cgo_pair_fields(q1, q2, pair)
    a, b = weighted_trace_identity(cube8, v, part.minus_eps, 3.0, ALPHA)
    assert a == pytest.approx(b, rel=1e-10)


def test_green_sides_finite_and_vanish_for_equal_potentials(cube8, setup):
    q1, q2, _, _ = setup
    pair = make_zeta_pair([0, 0, 2], ALPHA, [0, 1, 0], 2.0, 2.0)
    vol, bnd = green_identity_sides(cube8, q1, q2, 2.0, pair)
    assert np.isfinite(vol) and np.isfinite(bnd) and abs(vol) > 0
    vol0, _ = green_identity_sides(cube8, q1, q1, 2.0, pair)
    assert vol0 == 0


def test_plus_side_check_runs(cube8, setup):
    q1, q2, diff, _ = setup
    pair = make_zeta_pair([0, 0, 2], ALPHA, [0, 1, 0], 3.0, 2.0)
    _, u2 = cgo_pair_fields(q1, q2, pair)
    lhs, rhs = plus_side_check(cube8, q1, q2, 3.0, ALPHA, 0.1, diff, u2)
    assert lhs >= 0 and rhs > 0


def test_xi_alpha_plan_orthogonal():
    xis = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    for xi, a in zip(xis, xi_alpha_plan(xis, ALPHA)):
        assert abs(xi @ a) < 1e-10 and np.linalg.norm(a) == pytest.approx(1.0)


def test_continuation_exact_for_polynomials():
    f = lambda p: 1.0 + p[:, 0] - 0.5 * p[:, 1] * p[:, 2] + p[:, 0] ** 3  # noqa: E731
    r = vessella_continuation_test(f, [0.0, 0.0, 1.0], 1.0, degree=3, n_eval=300)
    assert r.extension_error < 1e-8 and 0 < r.theta_emp <= 1


def test_continuation_rejects_ill_conditioned():
    with pytest.raises(ValueError, match="ill-conditioned"):
        vessella_continuation_test(lambda p: p[:, 0], [0, 0, 1.0], 1.0, degree=8, cond_limit=10.0)


def test_reconstruct_constant_mode(cube8):
    out = reconstruct(cube8, [[0.0, 0.0, 0.0]], [8.0 * np.pi ** 3], 1.0)
    assert np.allclose(out, 1.0)


def test_export_csv(tmp_path, cube8, setup):
    q1, q2, diff, part = setup
    est = estimate_fourier_mode(cube8, [0.0, 0.0, 0.0], 3.0, 2.0, diff, part, q1=q1, q2=q2, dn_gap=0.5)
    export_modes_csv([est], tmp_path / "m.csv")
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 2
