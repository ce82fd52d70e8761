"""
Fourier-mode estimates of ``q1 - q2`` from partial boundary data.

For CGO solutions ``v`` (potential ``q1``, frequency ``zeta1``) and ``u2``
(potential ``q2``, frequency ``zeta2``), and ``u1`` solving the ``q1`` problem
with the trace of ``u2``::

    int_Omega (q1 - q2) u2 conj(v) dx = int_dOmega d_nu(u1 - u2) conj(v) dS

and ``u2 conj(v) = exp(-i xi.x)(1 + r2)(1 + conj(r1))``. Only the part of the
boundary integral on ``dOmega_{-,eps}`` is data; the rest is bounded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_unit_vector
from .cgo import make_zeta_pair, orthonormal_frame, solve_cgo
from .dnmap import BoundaryNormCalculus, build_dn, operator_norm_fractional, restrict_partial
from .fields import fourier_transform
from .forward import HelmholtzSolver, neumann_trace
from .geometry import partition_boundary


@dataclass
class FourierModeEstimate:
    xi: np.ndarray
    lam: float
    omega: float
    value: complex
    bound_data_term: float
    bound_lambda_term: float
    dn_gap: float
    plus_term: complex = None  # synthetic-mode only: the unmeasured boundary part
    cgo_ids: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def bound(self):
        return self.bound_data_term + self.bound_lambda_term


def data_factor(lam, omega, R, dn_gap):
    """``(w^2 + 2 lam^2)^{3/2} e^{2 lam R} ||dLambda||`` (multiplies ``C``)."""
    return (omega ** 2 + 2 * lam ** 2) ** 1.5 * np.exp(2 * lam * R) * dn_gap


def lambda_factor(lam):
    return 1.0 / np.sqrt(lam)


def cgo_pair_fields(q1, q2, pair, **kw):
    """``(v, u2)``: the CGO for ``q1`` at ``zeta1`` and for ``q2`` at ``zeta2``."""
    v, p1 = solve_cgo(q1, pair, which=1, **kw)
    u2, _ = solve_cgo(q2, p1, which=2, **kw)
    return v, u2


def green_identity_sides(grid, q1, q2, omega, pair, solver1=None, cgo=None, **kw):
    """``(volume, boundary)`` sides of the Green identity.

    ``u1`` comes from the finite-difference solver with the face trace of
    ``u2``. ``d_nu u1`` is its second-order one-sided normal derivative and
    ``d_nu u2`` the exact normal derivative of the CGO field.
    """
    v, u2 = cgo_pair_fields(q1, q2, pair, **kw) if cgo is None else cgo
    solver1 = HelmholtzSolver(grid, q1, omega) if solver1 is None else solver1
    pts = grid.interior_points
    vbar = np.conj(v.u_at(pts))
    volume = np.sum((q1.values - q2.values) * u2.u_at(pts) * vbar) * grid.cell_volume
    fc = grid.face_centers
    f = u2.u_at(fc)
    dn1 = neumann_trace(grid, solver1.solve(f), f, scheme="one_sided")
    dn2 = np.sum(u2.grad_u_at(fc) * grid.face_normals, axis=1)
    boundary = np.sum(grid.face_area * (dn1 - dn2) * np.conj(v.u_at(fc)))
    return complex(volume), complex(boundary)


def green_identity_residual(grid, q1, q2, omega, pair, **kw):
    """``|volume - boundary| / max(|volume|, |boundary|, 1e-30)``."""
    vol, bnd = green_identity_sides(grid, q1, q2, omega, pair, **kw)
    return float(abs(vol - bnd) / max(abs(vol), abs(bnd), 1e-30))


def boundary_term_check(grid, cgo1, partition, dn_diff, u2_trace, lam, omega, C=1.0, dn_gap=None, calc=None):
    """``(minus_term, est_bound)``: measured ``|int_{-,eps} dLambda(f) conj(v) dS|`` and
    ``C (w^2 + 2 lam^2)^{3/2} e^{2 lam R} ||dLambda||``."""
    part = restrict_partial(dn_diff, partition) if dn_diff.restriction is None else dn_diff
    rows = part.rows
    vbar = np.conj(cgo1.u_at(grid.face_centers[rows]))
    minus = np.sum(grid.face_area[rows] * (part.matrix @ u2_trace) * vbar)
    if dn_gap is None:
        dn_gap = operator_norm_fractional(part, calc or BoundaryNormCalculus(grid))
    return float(abs(minus)), float(C * data_factor(lam, omega, grid.R, dn_gap))


def weighted_trace_identity(grid, cgo1, faces, lam, alpha):
    """``(||e^{lam alpha.x} conj(v)||, ||1 + conj(r1)||)`` in ``L2`` over ``faces``."""
    x = grid.face_centers[faces]
    dS = grid.face_area[faces]
    a = np.exp(lam * x @ alpha) * np.conj(cgo1.u_at(x))
    b = 1.0 + np.conj(cgo1.remainder_at(x))
    return float(np.sqrt(np.sum(dS * np.abs(a) ** 2))), float(np.sqrt(np.sum(dS * np.abs(b) ** 2)))


def plus_side_check(grid, q1, q2, lam, alpha, epsilon, dn_full_diff, u2, C=1.0):
    """Both sides of the Carleman-derived bound on the ``+`` faces.

    ``lhs = ||e^{-lam phi} d_nu(u1-u2)||_{+,eps}``,
    ``rhs = C/sqrt(eps) [ ||e^{-lam phi}(q1-q2) u2|| / sqrt(lam)
                         + sqrt(-inf_-(alpha.nu)) ||e^{-lam phi} d_nu(u1-u2)||_{-,eps} ]``.
    """
    part = partition_boundary(grid, alpha, epsilon)
    f = u2.u_at(grid.face_centers)
    dn = dn_full_diff.matrix @ f
    wf = np.exp(-lam * grid.face_centers @ alpha)
    dS = grid.face_area

    def bnorm(idx):
        return np.sqrt(np.sum(dS[idx] * np.abs(wf[idx] * dn[idx]) ** 2))

    pts = grid.interior_points
    vol = np.sqrt(np.sum(np.abs(np.exp(-lam * pts @ alpha) * (q1.values - q2.values) * u2.u_at(pts)) ** 2)
                  * grid.cell_volume)
    an = grid.face_normals @ alpha
    inf_minus = np.sqrt(max(-an[part.minus].min(), 0.0)) if part.minus.size else 0.0
    lhs = bnorm(part.plus_eps)
    rhs = C / np.sqrt(epsilon) * (vol / np.sqrt(lam) + inf_minus * bnorm(part.minus_eps))
    return float(lhs), float(rhs)


def estimate_fourier_mode(grid, xi, lam, omega, dn_diff, partition, C=1.0, cgo=None, q1=None, q2=None,
                          dn_gap=None, calc=None, **kw):
    """Data-only estimate of ``(q1 - q2)^(xi)`` with its two bound components.

    ``dn_diff`` is the full DN difference (the ``+`` side term is then also
    computed and stored as ``plus_term`` for validation) or an already
    restricted partial one. CGOs are built from ``q1``, ``q2`` unless ``cgo``
    is given as ``(v, u2)``.
    """
    xi = np.asarray(xi, dtype=float)
    alpha = partition.alpha
    if abs(xi @ alpha) > 1e-10 * max(1.0, np.linalg.norm(xi)):
        raise ValueError("xi must be orthogonal to alpha")
    if np.linalg.norm(xi) > lam:
        raise ValueError(f"|xi| = {np.linalg.norm(xi):.3g} exceeds lambda = {lam}")
    if cgo is None:
        _, beta = _frame(xi, alpha)
        pair = make_zeta_pair(xi, alpha, beta, lam, omega)
        cgo = cgo_pair_fields(q1, q2, pair, **kw)
    v, u2 = cgo
    f = u2.u_at(grid.face_centers)
    vbar = np.conj(v.u_at(grid.face_centers))
    part = restrict_partial(dn_diff, partition) if dn_diff.restriction is None else dn_diff
    rows = part.rows
    value = np.sum(grid.face_area[rows] * (part.matrix @ f) * vbar[rows])
    plus = None
    if dn_diff.restriction is None:
        full = dn_diff.matrix @ f
        rest = np.setdiff1d(np.arange(grid.n_faces), rows)
        plus = complex(np.sum(grid.face_area[rest] * full[rest] * vbar[rest]))
    if dn_gap is None:
        dn_gap = operator_norm_fractional(part, calc or BoundaryNormCalculus(grid))
    return FourierModeEstimate(xi=xi, lam=float(lam), omega=float(omega), value=complex(value),
                               bound_data_term=float(C * data_factor(lam, omega, grid.R, dn_gap)),
                               bound_lambda_term=float(C * lambda_factor(lam)), dn_gap=float(dn_gap),
                               plus_term=plus, cgo_ids=(id(v), id(u2)))


def _frame(xi, alpha):
    """``(alpha, beta)`` completing ``xi`` to an orthogonal triple."""
    nx = np.linalg.norm(xi)
    if nx > 0:
        b = np.cross(xi / nx, alpha)
    else:
        b = np.cross(alpha, np.eye(3)[np.argmin(np.abs(alpha))])
    return alpha, b / np.linalg.norm(b)


def xi_alpha_plan(xis, alpha=None):
    """An ``alpha`` per mode: the given one when orthogonal, else a fixed frame choice."""
    out = []
    for xi in np.atleast_2d(xis):
        if alpha is not None and abs(np.asarray(xi) @ alpha) <= 1e-10 * max(1.0, np.linalg.norm(xi)):
            out.append(np.asarray(alpha, dtype=float))
        else:
            out.append(orthonormal_frame(xi)[0])
    return out


def truth_mode(q1, q2, xi):
    """Direct-quadrature Fourier transform of ``q1 - q2`` on the grid."""
    return fourier_transform(q1.grid, q1.values - q2.values, xi)


# --- analytic continuation test ---------------------------------------------------

@dataclass
class VessellaResult:
    theta_emp: float
    extension_error: float
    extension_max: float
    sup_V: float
    condition: float


def _monomials(n, degree):
    from itertools import product

    return [e for e in product(range(degree + 1), repeat=n) if sum(e) <= degree]


def _design(points, exps):
    return np.stack([np.prod(points ** np.asarray(e), axis=1) for e in exps], axis=1)


def cone_samples(axis, half_angle, rho, count, rng):
    """Uniform-ish samples of ``V cap B(0, rho)`` for a cone around ``axis``."""
    axis = check_unit_vector(axis)
    a, b = orthonormal_frame(axis)
    cosmin = np.cos(half_angle)
    c = rng.uniform(cosmin, 1.0, count)
    phi = rng.uniform(0, 2 * np.pi, count)
    sn = np.sqrt(1 - c ** 2)
    dirs = c[:, None] * axis + sn[:, None] * (np.cos(phi)[:, None] * a + np.sin(phi)[:, None] * b)
    r = rho * rng.uniform(0, 1, count) ** (1 / 3)
    return dirs * r[:, None]


def ball_samples(n, rho, count, rng):
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * (rho * rng.uniform(0, 1, count) ** (1 / n))[:, None]


def vessella_continuation_test(fhat_sampler, axis, rho, half_angle=np.deg2rad(15.0), degree=8, oversample=4,
                               n_eval=2000, seed=0, cond_limit=1e12):
    """Polynomial continuation of ``fhat`` from a cone to the ball ``B(0, rho)``.

    Returns the empirical exponent ``theta`` solving
    ``max_B |f| = e^{n rho (1-theta)} (sup_V |f|)^theta`` (clipped to ``(0, 1]``)
    and the relative extension error against the sampler on the ball.
    """
    rng = np.random.default_rng(seed)
    axis = np.asarray(axis, dtype=float)
    n = axis.size
    exps = _monomials(n, degree)
    m = oversample * len(exps)
    pv = cone_samples(axis, half_angle, rho, m, rng) if n == 3 else None
    fv = np.asarray(fhat_sampler(pv))
    A = _design(pv / rho, exps)
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > cond_limit:
        raise ValueError(f"ill-conditioned continuation fit (cond {cond:.2e}); lower the degree")
    coef, *_ = np.linalg.lstsq(A, fv, rcond=None)
    pb = ball_samples(n, rho, n_eval, rng)
    ext = _design(pb / rho, exps) @ coef
    truth = np.asarray(fhat_sampler(pb))
    sup_V = float(np.max(np.abs(fv)))
    ext_max = float(np.max(np.abs(ext)))
    scale = max(float(np.max(np.abs(truth))), 1e-300)
    err = float(np.max(np.abs(ext - truth)) / scale)
    if sup_V <= 0.0:
        theta = 1.0
    else:
        num = np.log(max(ext_max, 1e-300)) - n * rho
        den = np.log(sup_V) - n * rho
        theta = float(np.clip(num / den, 1e-12, 1.0)) if den != 0 else 1.0
    return VessellaResult(theta_emp=theta, extension_error=err, extension_max=ext_max, sup_V=sup_V, condition=cond)


# --- estimator ------------------------------------------------------------------

class FourierBoundEstimator(BaseEstimator):
    """Calibrates the single constant ``C`` shared by the data and ``1/sqrt(lambda)`` terms.

    ``fit(pairs)`` runs the mode estimate for every pair and mode in ``xis``
    and sets ``C_`` to the largest ``|value - truth| / (data + lambda factor)``
    ratio. ``predict(pairs)`` returns the estimates with bounds scaled by
    ``C_``.
    """

    def __init__(self, grid=None, omega=2.0, lam=3.0, xis=None, alpha=None, epsilon=0.1, safety=1.0,
                 cgo_margin=0.5):
        self.grid = grid
        self.omega = omega
        self.lam = lam
        self.xis = xis
        self.alpha = alpha
        self.epsilon = epsilon
        self.safety = safety
        self.cgo_margin = cgo_margin

    def _xis(self):
        if self.xis is not None:
            return np.atleast_2d(np.asarray(self.xis, dtype=float))
        return np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0], [0.0, 1.5, 1.5]])

    def _estimates(self, pair_list, C):
        calc = BoundaryNormCalculus(self.grid)
        out = []
        for q1, q2 in pair_list:
            diff = build_dn(self.grid, q1, self.omega) - build_dn(self.grid, q2, self.omega)
            alphas = xi_alpha_plan(self._xis(), self.alpha)
            for xi, alpha in zip(self._xis(), alphas):
                part = partition_boundary(self.grid, alpha, self.epsilon)
                est = estimate_fourier_mode(self.grid, xi, self.lam, self.omega, diff, part, C=C, q1=q1, q2=q2,
                                            calc=calc, margin=self.cgo_margin)
                est.meta["truth"] = complex(truth_mode(q1, q2, xi))
                est.meta["pair"] = (q1.name, q2.name)
                out.append(est)
        return out

    def fit(self, pairs, y=None):
        ests = self._estimates(pairs, 1.0)
        ratios = [abs(e.value - e.meta["truth"]) / (e.bound_data_term + e.bound_lambda_term) for e in ests]
        self.C_ = float(self.safety * max(ratios))
        self.train_ratios_ = np.array(ratios)
        return self

    def predict(self, pairs):
        return self._estimates(pairs, self.C_)

    def score(self, pairs, y=None):
        """Fraction of modes with ``|value - truth| <= bound``."""
        ests = self.predict(pairs)
        return float(np.mean([abs(e.value - e.meta["truth"]) <= e.bound for e in ests]))


def export_modes_csv(estimates, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi1", "xi2", "xi3", "re", "im", "bound_data", "bound_lambda", "dn_gap"])
        for e in estimates:
            w.writerow([repr(float(x)) for x in e.xi] + [repr(e.value.real), repr(e.value.imag),
                                                         repr(e.bound_data_term), repr(e.bound_lambda_term),
                                                         repr(e.dn_gap)])


def reconstruct(grid, xis, values, dxi):
    """Inverse Fourier sum ``(2 pi)^-n sum q_hat(xi) e^{i xi.x} dxi^n`` at interior nodes."""
    xis = np.atleast_2d(xis)
    pts = grid.interior_points
    return (np.exp(1j * pts @ xis.T) @ np.asarray(values)) * dxi ** grid.n / (2 * np.pi) ** grid.n
