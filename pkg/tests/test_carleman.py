import numpy as np
import pytest

from partialstab.carleman import (CalibrationError, CarlemanCalibrator, _operators, bump_field, calibration_family,
                                  conjugated_operator, constants_from_table, dirichlet_modes, evaluate_carleman,
                                  evaluate_remark_form, export_reports_csv, normal_derivative_h01,
                                  random_test_fields)
from partialstab.geometry import unit_cube

ALPHA = np.array([0.0, 0.6, 0.8])


def _smooth_field(g):
    x = g.interior_points
    return np.prod(np.sin(np.pi * (x + 0.5)), axis=1) * np.exp(x @ np.array([0.7, 0.4, -0.5]))


def test_expanded_and_direct_forms_converge():
    rel = []
    for h in (1 / 8, 1 / 16):
        g = unit_cube(h)
        u = _smooth_field(g)
        e = conjugated_operator(g, None, 2.0, 3.0, ALPHA, u)
        d = conjugated_operator(g, None, 2.0, 3.0, ALPHA, u, form="direct")
        rel.append(np.linalg.norm(e - d) / np.linalg.norm(e))
    assert rel[1] < 0.35 * rel[0] and rel[1] < 0.01


def test_cross_term_equals_boundary_flux():
    """2 <S u, A u> = -2 lam int (alpha.nu) |d_nu u|^2 for u vanishing on the boundary."""
    errs = []
    lam = 3.0
    for h in (1 / 8, 1 / 16):
        g = unit_cube(h)
        lap, grads = _operators(g)
        u = _smooth_field(g)
        S = lap @ u + (lam ** 2 + 4.0) * u
        A = -2 * lam * sum(a * (G @ u) for a, G in zip(ALPHA, grads))
        cross = 2 * np.sum(S * A) * g.cell_volume
        dn = normal_derivative_h01(g, u)
        bnd = -2 * lam * np.sum(g.face_area * (g.face_normals @ ALPHA) * dn ** 2)
        errs.append(abs(cross - bnd) / abs(bnd))
    assert errs[1] < 0.6 * errs[0] and errs[1] < 0.2


def test_zero_field_report(cube8):
    r = evaluate_carleman(cube8, None, 2.0, 1.0, ALPHA, np.zeros(cube8.n_interior))
    assert r.lhs_total == r.rhs_total == 0.0 and r.slack == 0.0


def test_rejects_bad_inputs(cube8):
    u = np.zeros(cube8.n_interior)
    with pytest.raises(ValueError):
        evaluate_carleman(cube8, None, 2.0, 0.0, ALPHA, u)
    with pytest.raises(ValueError):
        evaluate_carleman(cube8, None, 2.0, 1.0, [1.0, 1.0, 0.0], u)
    with pytest.raises(ValueError):
        conjugated_operator(cube8, None, 2.0, 1.0, ALPHA, u, form="nope")


def test_remark_form_volume_matches_reflected_direction(cube8):
    u = dirichlet_modes(cube8, 3)[2]
    lam = 2.0
    ut = np.exp(lam * (cube8.interior_points @ ALPHA)) * u
    a = evaluate_remark_form(cube8, None, 2.0, lam, ALPHA, ut)
    b = evaluate_carleman(cube8, None, 2.0, lam, -ALPHA, u, form="direct")
    assert a.rhs_volume == pytest.approx(b.rhs_volume, rel=1e-10)


def test_constants_from_table():
    lg = np.array([1.0, 2.0, 4.0, 8.0])
    D = np.array([[-1.0, 0.5, 3.0, 9.0], [2.0, -0.1, 1.0, 4.0]])
    assert constants_from_table(D, lg) == (1.0, 4.0, False)
    with pytest.raises(CalibrationError):
        constants_from_table(-np.abs(D), lg)
    assert constants_from_table(np.full((2, 4), np.inf), lg)[2]


def test_calibrator_generalises(cube8):
    cal = CarlemanCalibrator(cube8, None, omegas=(2.0, 5.0)).fit(calibration_family(cube8))
    assert cal.C_ > 0 and cal.lambda0_ >= 1.0
    assert cal.predict(random_test_fields(cube8, count=30)).mean() >= 0.95


def test_families_vanish_on_boundary(cube8):
    for u in calibration_family(cube8) + [bump_field(cube8, (0, 0, 0), 0.2)]:
        assert u.shape == (cube8.n_interior,) and np.all(np.isfinite(u))


def test_export_csv(tmp_path, cube8):
    reps = [evaluate_carleman(cube8, None, 2.0, 1.0, ALPHA, u, field_id=str(i))
            for i, u in enumerate(dirichlet_modes(cube8, 2))]
    export_reports_csv(reps, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0].startswith("omega,lambda") and len(lines) == 3
