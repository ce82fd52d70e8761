import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partialstab.fields import fourier_field, sobolev_norm
from partialstab.potentials import GaussianBump, on_grid
from partialstab.stability import (K_const, L_const, ScheduleError, StabilityBoundEstimator, StabilityRecord,
                                   SweepSettings, chain_report, eta_p, evaluate_point, fit_beta, hminus1_norm,
                                   hminus1_split, increasing_stability_verdict, interpolate_linfty,
                                   large_gap_bound, run_sweep, safe_log_gap, schedule_params, stability_rhs,
                                   write_records_csv)


def test_constants_for_three_dimensions():
    assert K_const(3, 0.5, 1.0) == 33.0
    assert L_const(3, 0.5) == 16.0
    eta, p = eta_p(3, 3)
    assert (eta, p) == (0.75, 0.8125)
    sp = schedule_params(2.0, 1e-3)
    assert sp.outer_exponent == pytest.approx(3 / 64)


def test_float_gaps_are_large_gap():
    sp = schedule_params(4.0, 1e-300)
    assert sp.regime == "large_gap" and sp.log_delta < -1e14 and sp.delta == 0.0


@pytest.mark.parametrize("log_gap", [-1e15, -1e20, -1e40])
def test_small_gap_chain_holds(log_gap):
    sp = schedule_params(8.0, 0.0, log_gap=log_gap)
    assert sp.regime == "small_gap"
    assert all(ok for *_, ok in chain_report(sp))


def test_schedule_rejections():
    with pytest.raises(ScheduleError) as e:
        schedule_params(1.0, 1e-3)
    assert e.value.link == "omega"
    with pytest.raises(ScheduleError):
        schedule_params(2.0, 1e-3, theta=1.0)
    with pytest.raises(ScheduleError):
        schedule_params(2.0, 1e-3, s=1)


def test_zero_gap_is_capped():
    assert safe_log_gap(0.0) == (-700.0, True)
    assert schedule_params(2.0, 0.0).gap_capped
    with pytest.raises(ValueError):
        safe_log_gap(-1.0)


def test_chain_reports_failing_link():
    sp = schedule_params(8.0, 0.0, log_gap=-1e15)
    links = dict((name, ok) for name, _, _, ok in chain_report(sp, xi_norm=1e9))
    assert not links["|xi| <= rho"]


def test_rhs_monotone_in_gap_and_infinite_for_tiny_log():
    sp = schedule_params(2.0, 1e-3)
    assert stability_rhs(2.0, 1e-6, sp) < stability_rhs(2.0, 1e-3, sp)
    assert stability_rhs(1.2, 0.9, schedule_params(1.2, 0.9)) == math.inf  # ln(ln w + |ln g|) <= 0


def test_large_gap_bound():
    assert large_gap_bound(None, 1.0, 0.5, 1.0, log_delta=-4.0) == pytest.approx(2 * math.e)
    assert large_gap_bound(None, 1.0, 0.5, 1e-3, log_delta=-1e14) == math.inf
    with pytest.raises(ValueError):
        large_gap_bound(None, 1.0, 0.5, 1e-3, log_delta=-1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e3), st.floats(1.6, 6.0))
def test_interpolation_exponents_sum_to_one(m, s):
    assert interpolate_linfty(m, s, m, 3) == pytest.approx(m, rel=1e-9)


def test_hminus1_matches_sobolev(cube8):
    q = on_grid(GaussianBump(1.0, (0, 0, 0), 0.15), cube8, s=3).values
    assert hminus1_norm(cube8, q) == pytest.approx(sobolev_norm(cube8, q, -1), rel=1e-10)
    low, high, total = hminus1_split(fourier_field(cube8, q), 10.0)
    assert low + high == pytest.approx(total) and low > 0 and high > 0


def _rec(omega, gap, h1):
    return StabilityRecord(pair="x", omega=omega, dn_gap=gap, hminus1=h1, linfty=h1, l2=h1)


def test_fit_beta_exact_power_law():
    gaps = np.geomspace(1e-4, 1e-1, 5)
    recs = [_rec(2.0, g, 3.0 * g ** 0.5) for g in gaps] + [_rec(4.0, g, 0.5 * g) for g in gaps]
    betas = fit_beta(recs)
    assert betas[2.0][0] == pytest.approx(0.5) and betas[2.0][1] == pytest.approx(3.0)
    assert betas[4.0][0] == pytest.approx(1.0)
    assert increasing_stability_verdict(betas) == (1, True)
    assert math.isnan(fit_beta(recs[:2])[2.0][0])


def test_sweep_identical_and_distinct(cube8):
    q1 = on_grid(GaussianBump(1.0, (0, 0, 0), 0.15), cube8, s=3, name="a")
    q2 = on_grid(GaussianBump(0.5, (0.1, 0, 0), 0.15), cube8, s=3, name="b")
    recs = run_sweep(cube8, [("same", q1, q1), ("diff", q1, q2)], SweepSettings(omegas=(2.0, 4.0)))
    assert [(r.pair, r.omega) for r in recs] == [("same", 2.0), ("diff", 2.0), ("same", 4.0), ("diff", 4.0)]
    same = recs[0]
    assert same.dn_gap == 0.0 and same.hminus1 == 0.0 and same.synthetic
    assert recs[1].dn_gap > 0 and recs[1].regime == "large_gap" and np.isfinite(recs[1].rhs_stab)
    est = StabilityBoundEstimator().fit(recs)
    assert est.score(recs) == 1.0


def test_sweep_records_assumption_failure(cube8):
    from partialstab.forward import dirichlet_spectrum_check
    from partialstab.fields import zero_potential
    lam1 = dirichlet_spectrum_check(cube8, zero_potential(cube8), 1.0).eigenvalues[0]
    q = zero_potential(cube8, s=3)
    rec = evaluate_point(cube8, q, q, math.sqrt(lam1), SweepSettings())
    assert rec.error.startswith("assumption_B")


def test_records_csv_is_deterministic(tmp_path):
    recs = [_rec(2.0, 1e-3, 0.1), _rec(4.0, 2e-3, 0.2)]
    write_records_csv(recs, tmp_path / "a.csv")
    write_records_csv(recs, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
