import numpy as np
import pytest

from partialstab import ConvergenceError
from partialstab.cgo import (CGO_CONSTANTS, CGOCalibrator, analytic_hs_norm, calibration_suite, cgo_norm_bounds,
                             make_zeta_pair, orthonormal_frame, remainder_ratio, solve_cgo, solve_remainder,
                             verify_remainder_bound)
from partialstab.fields import zero_potential
from partialstab.potentials import GaussianBump

Q = GaussianBump(2.0, (0.05, 0.0, 0.0), 0.15)


def test_worked_example():
    p = make_zeta_pair([0, 0, 2], [1, 0, 0], [0, 1, 0], 1.0, 2.0)
    assert np.allclose(p.zeta1, [1j, -2, 1])
    assert np.allclose(p.zeta2, [-1j, -2, -1])
    assert np.allclose(p.zeta1 + p.zeta2, [0, -4, 0])
    assert max(p.invariant_errors()) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_invariants_random(seed):
    rng = np.random.default_rng(seed)
    xi = rng.normal(size=3) * 3
    a, b = orthonormal_frame(xi, rng)
    lam, w = rng.uniform(0.1, 50), rng.uniform(0.5, 20)
    p = make_zeta_pair(xi, a, b, lam, w)
    e1, e2 = p.invariant_errors()
    assert e1 <= 1e-10 * (w ** 2 + 2 * lam ** 2) and e2 <= 1e-10 * (w ** 2 + 2 * lam ** 2)
    assert np.allclose(p.zeta1 + p.zeta2, -2 * p.s_mag * b)


def test_rejects_non_orthogonal_and_bad_radicand():
    with pytest.raises(ValueError, match="orthogonality"):
        make_zeta_pair([1, 0, 0], [1, 0, 0], [0, 1, 0], 1.0, 1.0)
    with pytest.raises(ValueError):
        make_zeta_pair([0, 0, 10], [1, 0, 0], [0, 1, 0], 1.0, 1.0)
    with pytest.raises(ValueError, match="n = 3"):
        make_zeta_pair([0, 1], [1, 0], [0, 1], 1.0, 1.0)


def test_zero_potential_gives_zero_remainder(cube8):
    p = make_zeta_pair([0, 0, 0], [1, 0, 0], [0, 1, 0], 5.0, 2.0)
    sol, _ = solve_cgo(zero_potential(cube8, s=3), p)
    assert np.all(sol.remainder_nodes() == 0)
    assert sol.hs_norm(2) == 0.0


@pytest.mark.parametrize("lam", [5.0, 20.0])
def test_cgo_solves_the_equation(lam):
    """-Lap u + q u - omega^2 u = 0 at sample points, via the spectral Hessian."""
    p = make_zeta_pair([0, 0, 2], [1, 0, 0], [0, 1, 0], lam, 2.0)
    sol, _ = solve_cgo(Q, p, N=32)
    pts = np.random.default_rng(0).uniform(-0.3, 0.3, (40, 3))
    u = sol.u_at(pts)
    res = -np.trace(sol.hessian_u_at(pts), axis1=1, axis2=2) + (Q(pts) - 4.0) * u
    assert np.max(np.abs(res)) < 1e-5 * np.max(np.abs(u)) * np.vdot(p.zeta1, p.zeta1).real
    assert sol.residual < 1e-10


def test_remainder_decays_with_zeta():
    qn = analytic_hs_norm(Q, 2, 32)
    norms = []
    for lam in (10.0, 40.0):
        p = make_zeta_pair([0, 0, 0], [1, 0, 0], [0, 1, 0], lam, 2.0)
        sol, _ = solve_cgo(Q, p, N=32)
        norms.append(sol.hs_norm(2))
        ok, ratio = verify_remainder_bound(sol, qn, CGO_CONSTANTS["C1"])
        assert ok, ratio
    assert norms[1] < 0.4 * norms[0]


def test_small_zeta_reports_convergence_error():
    p = make_zeta_pair([0, 0, 0], [1, 0, 0], [0, 1, 0], 0.5, 1.0)
    with pytest.raises(ConvergenceError):
        solve_remainder(GaussianBump(300.0, (0, 0, 0), 0.15), p.zeta1, N=16)


def test_grid_potential_matches_callable(cube16):
    from partialstab.potentials import on_grid
    p = make_zeta_pair([0, 0, 1], [1, 0, 0], [0, 1, 0], 8.0, 2.0)
    a, _ = solve_cgo(on_grid(Q, cube16, s=3), p)
    b, _ = solve_cgo(Q, p, N=48, R=cube16.R)
    pts = cube16.interior_points[::37]
    assert np.max(np.abs(a.remainder_at(pts) - b.remainder_at(pts))) < 0.05 * np.max(np.abs(b.remainder_at(pts)))


def test_norm_bounds_hold(cube8):
    p = make_zeta_pair([0, 0, 0], [1, 0, 0], [0, 1, 0], 4.0, 2.0)
    sol, _ = solve_cgo(Q, p, N=32)
    for order in (1, 2):
        norm, bound = cgo_norm_bounds(sol, cube8, order)
        assert norm <= bound


def test_calibrator_small():
    cal = CGOCalibrator(lambdas=[2.0, 8.0, 32.0], N=16).fit(calibration_suite(2))
    assert cal.C1_ > 0 and cal.C2_ > 0
    assert list(cal.predict([[1e9, 1.0], [0.0, 1.0]])) == [True, False]
    assert remainder_ratio(None, 0.0) == 0.0
