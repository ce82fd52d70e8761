"""
Parameter schedule, ``H^{-1}`` splitting, ``L^infty`` interpolation and the
frequency sweep that measures increasing stability.

``delta = exp(-exp(K lam_tilde^{1/L}))`` underflows for every realistic
parameter set (``K ~ 33``), so the schedule works with ``log_delta`` and the
gap's logarithm throughout.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import AssumptionViolation
from .dnmap import BoundaryNormCalculus, cached_build_dn, operator_norm_fractional, restrict_partial
from .fields import fourier_field, periodic_embedding, sobolev_norm
from .geometry import partition_boundary

log = logging.getLogger(__name__)

LN_CAP = 700.0


class ScheduleError(ValueError):
    """A link of the parameter chain failed; ``link`` names it."""

    def __init__(self, message, link):
        super().__init__(message)
        self.link = link


@dataclass(frozen=True)
class ScheduleParams:
    omega: float
    dn_gap: float
    n: int
    s: float
    theta: float
    R: float
    M: float
    lambda0: float
    C2M: float
    lambda_tilde: float
    K: float
    L: float
    log_delta: float
    log_gap: float
    rho: float
    lam: float
    eta: float
    p: float
    regime: str
    gap_capped: bool = False

    @property
    def delta(self):
        return math.exp(self.log_delta) if self.log_delta > -745 else 0.0

    @property
    def outer_exponent(self):
        return self.theta * self.eta / (2 * (1 + self.s))


def K_const(n, theta, R):
    return n / theta + 4 * n * (1 - theta) / theta + 5 * R + (n + 2) / theta


def L_const(n, theta):
    return (3 * n - 2 * n * theta + 2) / theta


def eta_p(s, n):
    eta = (s - n / 2) / 2
    if eta <= 0:
        raise ScheduleError(f"s = {s} gives eta = {eta} <= 0; need s > n/2", "eta")
    return eta, (1 + s - eta) / (1 + s)


def safe_log_gap(dn_gap, cap=LN_CAP):
    """``(ln dn_gap, capped)`` with ``|ln 0|`` replaced by ``cap``."""
    if dn_gap < 0:
        raise ValueError("dn_gap must be >= 0")
    if dn_gap == 0 or math.log(dn_gap) < -cap:
        return -cap, True
    return math.log(dn_gap), False


def rho_of(omega, log_gap, K):
    """``(1/K) ln(ln w + |ln gap|)``; ``nan`` when the inner log is <= 0."""
    inner = math.log(omega) + abs(log_gap)
    return math.log(inner) / K if inner > 0 else float("nan")


def lambda_of(rho, n, theta):
    return rho ** ((n + 2) / theta) * math.exp(2 * n * rho * (1 - theta) / theta)


def schedule_params(omega, dn_gap, n=3, s=3, theta=0.5, R=1.0, M=1.0, lambda0=1.0, C2M=1.0, margin=0.1,
                    log_gap=None, check=True):
    """Parameter chain for one ``(omega, dn_gap)``.

    ``log_gap`` may be given directly to reach gaps below ``delta`` (which
    are not representable as floats). In the small-gap regime every link of
    the chain is verified and a :class:`ScheduleError` names the first one
    that fails.

    >>> p = schedule_params(2.0, 1e-3)
    >>> (p.K, p.L, p.regime)
    (33.0, 16.0, 'large_gap')
    """
    if omega <= 1:
        raise ScheduleError("omega must exceed 1", "omega")
    if not 0 < theta < 1:
        raise ScheduleError("theta must lie in (0, 1)", "theta")
    if s < n // 2 + 1:
        raise ScheduleError(f"s = {s} below [n/2]+1", "s")
    eta, p = eta_p(s, n)
    lt = max(1.0, lambda0, C2M) * (1 + margin)
    K, L = K_const(n, theta, R), L_const(n, theta)
    log_delta = -math.exp(K * lt ** (1 / L))
    capped = False
    if log_gap is None:
        log_gap, capped = safe_log_gap(dn_gap)
    regime = "small_gap" if log_gap < log_delta else "large_gap"
    rho = rho_of(omega, log_gap, K)
    lam = lambda_of(rho, n, theta) if np.isfinite(rho) and rho > 0 else float("nan")
    sp = ScheduleParams(omega=float(omega), dn_gap=float(dn_gap), n=n, s=s, theta=theta, R=R, M=M,
                        lambda0=lambda0, C2M=C2M, lambda_tilde=lt, K=K, L=L, log_delta=log_delta,
                        log_gap=log_gap, rho=rho, lam=lam, eta=eta, p=p, regime=regime, gap_capped=capped)
    if check:
        if L < 1:
            raise ScheduleError("L < 1", "L")
        if not log_delta < 0:
            raise ScheduleError("delta >= 1", "delta")
        if regime == "small_gap":
            check_chain(sp)
    return sp


def chain_report(sp, xi_norm=0.0):
    """Each inequality of the chain as ``(name, lhs, rhs, holds)``."""
    rL = sp.rho ** sp.L
    z = math.sqrt(sp.omega ** 2 + 2 * sp.lam ** 2)
    links = [
        ("rho >= lambda_tilde^(1/L)", sp.rho, sp.lambda_tilde ** (1 / sp.L), sp.rho >= sp.lambda_tilde ** (1 / sp.L)),
        ("lambda >= rho^L", sp.lam, rL, sp.lam >= rL),
        ("rho^L >= lambda_tilde", rL, sp.lambda_tilde, rL >= sp.lambda_tilde),
        ("lambda_tilde >= lambda0", sp.lambda_tilde, sp.lambda0, sp.lambda_tilde >= sp.lambda0),
        ("|xi| <= rho", xi_norm, sp.rho, xi_norm <= sp.rho),
        ("rho <= lambda", sp.rho, sp.lam, sp.rho <= sp.lam),
        ("lambda <= 2(lambda^2 + omega^2)", sp.lam, 2 * (sp.lam ** 2 + sp.omega ** 2),
         sp.lam <= 2 * (sp.lam ** 2 + sp.omega ** 2)),
        ("|zeta| > C2 M", z, sp.C2M, z > sp.C2M),
        ("delta < 1", sp.log_delta, 0.0, sp.log_delta < 0),
    ]
    return links


def check_chain(sp, xi_norm=0.0):
    for name, a, b, ok in chain_report(sp, xi_norm):
        if not ok:
            raise ScheduleError(f"schedule link failed: {name} ({a!r} vs {b!r})", name)


# --- norms ----------------------------------------------------------------------

def hminus1_split(ff, rho):
    """Squared ``H^{-1}`` mass below and above ``|xi| = rho``: ``(low, high, total)``."""
    w = np.abs(ff.values) ** 2 / (1 + ff.kabs ** 2) * ff.cell_volume / (2 * np.pi) ** ff.n
    lowmask = ff.kabs < rho
    low, high = float(w[lowmask].sum()), float(w[~lowmask].sum())
    return low, high, low + high


def hminus1_norm(grid, values, emb=None):
    return float(np.sqrt(hminus1_split(fourier_field(grid, values, emb), np.inf)[2]))


def interpolate_linfty(hminus1, s, M, n, C=1.0):
    """``C hminus1^{eta/(1+s)} M^p`` with ``s = n/2 + 2 eta`` and ``p = (1+s-eta)/(1+s)``."""
    if hminus1 < 0:
        raise ValueError("hminus1 must be >= 0")
    eta, p = eta_p(s, n)
    return float(C * hminus1 ** (eta / (1 + s)) * M ** p)


def large_gap_bound(delta, M, theta, dn_gap, C=1.0, log_delta=None):
    """``(2 C M / delta^{theta/2}) dn_gap^{theta/2}``, evaluated in log space (``inf`` on overflow)."""
    log_delta = math.log(delta) if log_delta is None else log_delta
    log_gap, _ = safe_log_gap(dn_gap)
    if log_gap < log_delta:
        raise ValueError("large-gap bound requested with dn_gap < delta")
    val = math.log(2 * C * M) + theta / 2 * (log_gap - log_delta)
    return math.exp(val) if val < 709 else math.inf


def stability_rhs(omega, dn_gap, sched, C=1.0):
    """``C [w^7 gap + rho_f^{-2/theta}]^{theta eta / (2(1+s))}`` with
    ``rho_f = (1/K) ln(ln w + |ln gap|)``; ``inf`` when ``rho_f <= 0``."""
    log_gap, _ = safe_log_gap(dn_gap)
    rho = rho_of(omega, log_gap, sched.K)
    if not np.isfinite(rho) or rho <= 0:
        return math.inf
    first = omega ** 7 * dn_gap
    second = rho ** (-2 / sched.theta)
    return float(C * (first + second) ** sched.outer_exponent)


# --- records and sweep --------------------------------------------------------------

@dataclass
class StabilityRecord:
    pair: str
    omega: float
    dn_gap: float
    hminus1: float
    linfty: float
    l2: float
    schedule: ScheduleParams = None
    rhs_stab: float = math.nan
    rhs_large: float = math.nan
    regime: str = ""
    synthetic: bool = False
    error: str = ""

    def row(self):
        return [self.pair, repr(self.omega), repr(self.dn_gap), repr(self.hminus1), repr(self.linfty),
                repr(self.l2), self.regime, repr(self.rhs_stab), repr(self.rhs_large), int(self.synthetic),
                self.error]


RECORD_COLUMNS = ["pair", "omega", "dn_gap", "hminus1", "linfty", "l2", "regime", "rhs_stab", "rhs_large",
                  "synthetic", "error"]


@dataclass
class SweepSettings:
    omegas: tuple = (2.0, 4.0, 8.0, 16.0)
    alpha: tuple = (1.0, 0.0, 0.0)
    epsilon: float = 0.1
    theta: float = 0.5
    s: float = 3
    M: float = 1.0
    lambda0: float = 1.0
    C2M: float = 1.0
    margin: float = 0.1
    C_stab: float = 1.0
    C_large: float = 1.0
    c_small: float = 1e-3
    norm_method: str = "power"
    n_jobs: int = 1
    extra: dict = field(default_factory=dict)


def evaluate_point(grid, q1, q2, omega, settings, cache=None, calc=None, name=""):
    """One sweep point: DN gap on the partial boundary, norms, schedule and bounds."""
    calc = calc or BoundaryNormCalculus(grid)
    diff = q1.values - q2.values
    emb = periodic_embedding(grid)
    h1 = hminus1_norm(grid, diff, emb)
    linf = float(np.max(np.abs(diff))) if diff.size else 0.0
    l2 = float(np.sqrt(np.sum(diff ** 2) * grid.cell_volume))
    rec = StabilityRecord(pair=name, omega=float(omega), dn_gap=math.nan, hminus1=h1, linfty=linf, l2=l2)
    try:
        d1 = cached_build_dn(cache, grid, q1, omega, c_small=settings.c_small)
        d2 = d1 if q2.hash == q1.hash else cached_build_dn(cache, grid, q2, omega, c_small=settings.c_small)
    except AssumptionViolation as exc:
        rec.error = f"{exc.reason}: {exc}"
        return rec
    part = partition_boundary(grid, np.asarray(settings.alpha, dtype=float), settings.epsilon)
    gap = operator_norm_fractional(restrict_partial(d1 - d2, part), calc, method=settings.norm_method)
    rec.dn_gap = float(gap)
    sched = schedule_params(omega, gap, n=grid.n, s=settings.s, theta=settings.theta, R=grid.R, M=settings.M,
                            lambda0=settings.lambda0, C2M=settings.C2M, margin=settings.margin)
    rec.schedule, rec.regime, rec.synthetic = sched, sched.regime, sched.gap_capped
    rec.rhs_stab = stability_rhs(omega, gap, sched, settings.C_stab)
    if sched.regime == "large_gap":
        rec.rhs_large = large_gap_bound(None, settings.M, settings.theta, gap, settings.C_large,
                                        log_delta=sched.log_delta)
    return rec


def run_sweep(grid, pairs, settings=None, cache=None):
    """Evaluate every ``(pair, omega)``; failures are recorded, never raised.

    ``pairs`` is a sequence of ``(name, q1, q2)``. Records come back ordered
    by ``omega`` and then by pair order.
    """
    settings = settings or SweepSettings()
    calc = BoundaryNormCalculus(grid)
    out = []
    for omega in sorted(settings.omegas):
        for name, q1, q2 in pairs:
            try:
                out.append(evaluate_point(grid, q1, q2, omega, settings, cache, calc, name))
            except Exception as exc:  # recorded so the sweep continues
                log.warning("sweep point (%s, %g) failed: %s", name, omega, exc)
                out.append(StabilityRecord(pair=name, omega=float(omega), dn_gap=math.nan, hminus1=math.nan,
                                           linfty=math.nan, l2=math.nan, error=f"{type(exc).__name__}: {exc}"))
    return out


def fit_beta(records, min_points=3):
    """``{omega: (beta, A, npts)}`` from ``log hminus1 = log A + beta log dn_gap``."""
    out = {}
    for omega in sorted({r.omega for r in records}):
        pts = [(r.dn_gap, r.hminus1) for r in records
               if r.omega == omega and not r.error and r.dn_gap > 0 and r.hminus1 > 0]
        if len(pts) < min_points:
            out[omega] = (math.nan, math.nan, len(pts))
            continue
        x, y = np.log(np.array(pts)).T
        beta, logA = np.polyfit(x, y, 1)
        out[omega] = (float(beta), float(math.exp(logA)), len(pts))
    return out


def increasing_stability_verdict(betas):
    """``(n_nondecreasing_steps, last_gt_first)`` over the ordered betas."""
    b = [betas[w][0] for w in sorted(betas)]
    steps = sum(1 for a, c in zip(b, b[1:]) if c >= a)
    return steps, bool(b[-1] > b[0])


class StabilityBoundEstimator(BaseEstimator):
    """Single global constant ``C`` for the stability bound.

    ``fit(records)`` sets ``C_ = safety * max(linfty / rhs)`` with the
    uncalibrated (``C = 1``) right side; ``predict`` returns the calibrated
    right side for each record and ``score`` the fraction that hold.
    """

    def __init__(self, safety=1.0):
        self.safety = safety

    @staticmethod
    def _rhs1(r):
        return stability_rhs(r.omega, r.dn_gap, r.schedule, 1.0)

    def fit(self, records, y=None):
        ratios = [r.linfty / self._rhs1(r) for r in records if not r.error and r.schedule is not None]
        if not ratios:
            raise ValueError("no usable training records")
        self.C_ = float(self.safety * max(ratios))
        return self

    def predict(self, records):
        return np.array([self.C_ * self._rhs1(r) if r.schedule is not None else math.nan for r in records])

    def score(self, records, y=None):
        rhs = self.predict(records)
        ok = [r.linfty <= b for r, b in zip(records, rhs) if not r.error]
        return float(np.mean(ok)) if ok else math.nan


# --- outputs ----------------------------------------------------------------------------

def write_records_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(r.row())


def write_summary_csv(betas, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega", "beta", "A", "n_points"])
        for omega in sorted(betas):
            b, A, m = betas[omega]
            w.writerow([repr(omega), repr(b), repr(A), m])


def write_svg(records, path, title="H^-1 difference vs partial DN gap"):
    """Log-log scatter of ``hminus1`` against ``dn_gap``, one colour per omega."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "partialstab"
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for omega in sorted({r.omega for r in records}):
        pts = np.array([(r.dn_gap, r.hminus1) for r in records
                        if r.omega == omega and not r.error and r.dn_gap > 0 and r.hminus1 > 0])
        if len(pts):
            ax.loglog(pts[:, 0], pts[:, 1], "o", label=f"omega={omega:g}")
    ax.set_xlabel("partial DN gap")
    ax.set_ylabel("||q1-q2|| in H^-1")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def schedule_dict(sp):
    return asdict(sp)
