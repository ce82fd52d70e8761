"""
Numerical evaluation of the boundary Carleman inequality with linear weight
``phi(x) = alpha . x`` and calibration of its constants ``(C, lambda0)``.

For ``u`` vanishing on the boundary the inequality reads::

    -(1/lam) int_{d-} (alpha.nu) |d_nu u|^2 + C ||u||^2
        <= (1/lam^2) || e^{lam phi} (Lap + w^2 - q) e^{-lam phi} u ||^2
           + (1/lam) int_{d+} (alpha.nu) |d_nu u|^2

where ``d-`` / ``d+`` are the faces with ``alpha.nu <= 0`` / ``> 0``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator

from ._validation import check_interior_field, check_unit_vector
from .forward import _laplacian_blocks, neumann_trace


@dataclass(frozen=True)
class CarlemanReport:
    lam: float
    omega: float
    alpha: tuple
    lhs_boundary: float
    lhs_volume: float
    rhs_volume: float
    rhs_boundary: float
    C: float
    field_id: str = ""

    @property
    def lhs_total(self):
        return self.lhs_boundary + self.lhs_volume

    @property
    def rhs_total(self):
        return self.rhs_volume + self.rhs_boundary

    @property
    def slack(self):
        return self.rhs_total - self.lhs_total

    def admissible_C(self, u_norm2):
        """Largest ``C`` for which this report's slack stays >= 0."""
        if u_norm2 == 0:
            return np.inf
        return (self.rhs_total - self.lhs_boundary) / u_norm2


@lru_cache(maxsize=8)
def _operators(grid):
    """``Lap_h`` (interior block, zero boundary values) and centred gradients."""
    lap, _ = _laplacian_blocks(grid)
    lshape = grid.lattice_shape
    strides = [int(np.prod(lshape[d + 1:])) for d in range(grid.n)]
    pos = -np.ones(grid.n_lattice, dtype=int)
    pos[grid.interior] = np.arange(grid.n_interior)
    grads = []
    rows = np.arange(grid.n_interior)
    for st in strides:
        cols_p, cols_m = pos[grid.interior + st], pos[grid.interior - st]
        r = np.concatenate([rows[cols_p >= 0], rows[cols_m >= 0]])
        c = np.concatenate([cols_p[cols_p >= 0], cols_m[cols_m >= 0]])
        v = np.concatenate([np.full((cols_p >= 0).sum(), 0.5 / grid.h), np.full((cols_m >= 0).sum(), -0.5 / grid.h)])
        grads.append(sp.csr_matrix((v, (r, c)), shape=(grid.n_interior, grid.n_interior)))
    return -lap, grads


def conjugated_operator(grid, q, omega, lam, alpha, u, form="expanded"):
    """``e^{lam phi} (Lap + w^2 - q) e^{-lam phi} u`` at interior nodes.

    ``form="expanded"`` uses ``Lap u - 2 lam alpha.grad u + (lam^2 + w^2 - q) u``;
    ``form="direct"`` conjugates the discrete Laplacian literally. The two
    agree to ``O(h^2)`` on smooth fields.
    """
    lap, grads = _operators(grid)
    qv = 0.0 if q is None else q.values
    if form == "expanded":
        adv = sum(a * (g @ u) for a, g in zip(alpha, grads))
        return lap @ u - 2 * lam * adv + (lam ** 2 + omega ** 2 - qv) * u
    if form == "direct":
        w = np.exp(lam * (grid.interior_points @ alpha))
        return w * (lap @ (u / w) + (omega ** 2 - qv) * (u / w))
    raise ValueError(f"unknown form {form!r}")


def normal_derivative_h01(grid, u):
    """``d_nu u`` per face for ``u`` vanishing on the boundary (one-sided, second order)."""
    return neumann_trace(grid, u, np.zeros(grid.n_faces, dtype=np.asarray(u).dtype), scheme="one_sided")


def evaluate_carleman(grid, q, omega, lam, alpha, u, C=1.0, form="expanded", field_id=""):
    """Both sides of the Carleman inequality for one test field.

    Parameters
    ----------
    u : array, shape (n_interior,)
        Interior values; boundary values are taken as zero.
    C : float
        Constant multiplying ``||u||^2`` on the left.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    alpha = check_unit_vector(alpha, grid.n)
    u = check_interior_field(grid, u)
    dn = normal_derivative_h01(grid, u)
    an = grid.face_normals @ alpha
    w = grid.face_area * np.abs(dn) ** 2
    minus, plus = an <= 0, an > 0
    vol = conjugated_operator(grid, q, omega, lam, alpha, u, form)
    return CarlemanReport(
        lam=float(lam), omega=float(omega), alpha=tuple(alpha.tolist()),
        lhs_boundary=float(-np.sum(an[minus] * w[minus]) / lam),
        lhs_volume=float(C * np.sum(np.abs(u) ** 2) * grid.cell_volume),
        rhs_volume=float(np.sum(np.abs(vol) ** 2) * grid.cell_volume / lam ** 2),
        rhs_boundary=float(np.sum(an[plus] * w[plus]) / lam),
        C=float(C), field_id=field_id)


def evaluate_remark_form(grid, q, omega, lam, alpha, u_tilde, C=1.0, field_id=""):
    """Weighted form with ``u_tilde = e^{lam phi} u`` and the weight ``-phi``.

    The volume term is ``||e^{-lam phi} (Lap + w^2 - q) u_tilde||^2 / lam^2`` and
    the boundary terms carry ``e^{-2 lam phi}``; ``+`` faces sit on the left.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    alpha = check_unit_vector(alpha, grid.n)
    ut = check_interior_field(grid, u_tilde)
    lap, _ = _operators(grid)
    qv = 0.0 if q is None else q.values
    wi = np.exp(-lam * (grid.interior_points @ alpha))
    wf = np.exp(-2 * lam * (grid.face_centers @ alpha))
    dn = normal_derivative_h01(grid, ut)
    an = grid.face_normals @ alpha
    w = grid.face_area * wf * np.abs(dn) ** 2
    minus, plus = an <= 0, an > 0
    vol = wi * (lap @ ut + (omega ** 2 - qv) * ut)
    return CarlemanReport(
        lam=float(lam), omega=float(omega), alpha=tuple(alpha.tolist()),
        lhs_boundary=float(np.sum(an[plus] * w[plus]) / lam),
        lhs_volume=float(C * np.sum(np.abs(wi * ut) ** 2) * grid.cell_volume),
        rhs_volume=float(np.sum(np.abs(vol) ** 2) * grid.cell_volume / lam ** 2),
        rhs_boundary=float(-np.sum(an[minus] * w[minus]) / lam),
        C=float(C), field_id=field_id)


# --- test-field families -------------------------------------------------------

def _bubble(grid, pts):
    """Polynomial that vanishes on the box boundary (1 inside for balls: cut by r^2)."""
    shape = grid.shape
    if shape.kind == "box":
        c, hw = np.asarray(shape.center), np.asarray(shape.half_widths)
        return np.prod(1.0 - ((pts - c) / hw) ** 2, axis=1)
    c = np.asarray(shape.center)
    return 1.0 - np.sum((pts - c) ** 2, axis=1) / shape.radius ** 2


def bump_field(grid, center, width):
    pts = grid.interior_points
    g = np.exp(-np.sum((pts - np.asarray(center)) ** 2, axis=1) / (2 * width ** 2))
    return g * _bubble(grid, pts)


def trig_field(grid, wavevector, phase=0.0):
    pts = grid.interior_points
    return np.cos(pts @ np.asarray(wavevector) + phase) * _bubble(grid, pts)


def dirichlet_modes(grid, k=5):
    """Lowest ``k`` eigenvectors of the discrete Dirichlet Laplacian, L2-normalized."""
    lap, _ = _operators(grid)
    A = (-lap).tocsc()
    if grid.n_interior <= 600:
        w, V = np.linalg.eigh(A.toarray())
        V = V[:, :k]
    else:
        w, V = spla.eigsh(A, k=k, sigma=0.0, which="LM")
        V = V[:, np.argsort(w)]
    return [V[:, j] / np.sqrt(np.sum(V[:, j] ** 2) * grid.cell_volume) for j in range(V.shape[1])]


def calibration_family(grid, seed=0, n_bumps=5, n_modes=5):
    """Tensor Gaussians at random centres/widths plus the lowest Dirichlet modes."""
    rng = np.random.default_rng(seed)
    hw = np.asarray(grid.shape.half_widths) if grid.shape.kind == "box" else np.full(grid.n, grid.shape.radius / 2)
    c0 = np.asarray(grid.shape.center)
    fam = [bump_field(grid, c0 + rng.uniform(-0.5, 0.5, grid.n) * hw, rng.uniform(0.1, 0.3))
           for _ in range(n_bumps)]
    return fam + dirichlet_modes(grid, n_modes)


def random_test_fields(grid, count=200, seed=1):
    """Randomized bump and trig fields, half of each."""
    rng = np.random.default_rng(seed)
    hw = np.asarray(grid.shape.half_widths) if grid.shape.kind == "box" else np.full(grid.n, grid.shape.radius / 2)
    c0 = np.asarray(grid.shape.center)
    out = []
    for i in range(count):
        if i % 2 == 0:
            out.append(bump_field(grid, c0 + rng.uniform(-0.6, 0.6, grid.n) * hw, rng.uniform(0.08, 0.35)))
        else:
            kmax = np.pi / (4 * grid.h)
            out.append(trig_field(grid, rng.uniform(-kmax, kmax, grid.n), rng.uniform(0, 2 * np.pi)))
    return out


# --- calibration -----------------------------------------------------------------

def default_lambda_grid():
    return np.geomspace(1.0, 1e3, 16)


def admissible_C_table(grid, q, omega, alpha, family, lambda_grid):
    """Matrix ``D[i, j]``: largest admissible ``C`` for field ``i`` at ``lambda_grid[j]``."""
    D = np.full((len(family), len(lambda_grid)), np.inf)
    for i, u in enumerate(family):
        nrm2 = float(np.sum(np.abs(u) ** 2) * grid.cell_volume)
        for j, lam in enumerate(lambda_grid):
            D[i, j] = evaluate_carleman(grid, q, omega, lam, alpha, u, C=0.0).admissible_C(nrm2)
    return D


class CalibrationError(RuntimeError):
    pass


def constants_from_table(D, lambda_grid, C_max=1e6):
    """``(C, lambda0, degenerate)`` from an admissible-C table.

    ``lambda0`` is the smallest grid value from which every column stays
    positive; ``C`` is the smallest admissible value over those columns.
    """
    col = D.min(axis=0)
    if np.all(np.isinf(col)):
        return float(C_max), float(lambda_grid[0]), True
    ok = col > 0
    if not ok[-1]:
        raise CalibrationError(f"no lambda in the grid gives slack >= 0 (worst field {int(np.argmin(D[:, -1]))})")
    j0 = len(ok) - int(np.argmin(ok[::-1])) if not ok.all() else 0
    return float(min(col[j0:].min(), C_max)), float(lambda_grid[j0]), False


def calibrate_constants(grid, q, omega, alpha, family, lambda_grid=None):
    """Return ``(C_emp, lambda0_emp)`` for one frequency; see :func:`constants_from_table`."""
    if len(family) == 0:
        raise ValueError("calibration family is empty")
    lambda_grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid)
    D = admissible_C_table(grid, q, omega, alpha, family, lambda_grid)
    C, lam0, _ = constants_from_table(D, lambda_grid)
    return C, lam0


class CarlemanCalibrator(BaseEstimator):
    """One ``(C, lambda0)`` valid for every frequency in ``omegas``.

    ``fit`` takes the list of test fields. ``C_`` is ``safety`` times the
    smallest admissible constant over all frequencies and ``lambda0_`` the
    largest per-frequency threshold. ``transform`` returns slacks at
    ``lambda = lambda_factor * lambda0_``, one column per frequency.
    """

    def __init__(self, grid=None, q=None, omegas=(2.0, 5.0, 10.0, 20.0), alpha=None, lambda_grid=None,
                 safety=1.0, lambda_factor=2.0):
        self.grid = grid
        self.q = q
        self.omegas = omegas
        self.alpha = alpha
        self.lambda_grid = lambda_grid
        self.safety = safety
        self.lambda_factor = lambda_factor

    def _alpha(self):
        return np.eye(self.grid.n)[0] if self.alpha is None else np.asarray(self.alpha, dtype=float)

    def fit(self, family, y=None):
        lg = default_lambda_grid() if self.lambda_grid is None else np.asarray(self.lambda_grid)
        per = {}
        for w in self.omegas:
            D = admissible_C_table(self.grid, self.q, w, self._alpha(), family, lg)
            C, lam0, degenerate = constants_from_table(D, lg)
            per[float(w)] = (C, lam0)
        self.per_omega_ = per
        self.C_ = self.safety * min(c for c, _ in per.values())
        self.lambda0_ = max(l0 for _, l0 in per.values())
        return self

    def transform(self, family):
        lam = self.lambda_factor * self.lambda0_
        return np.array([[evaluate_carleman(self.grid, self.q, w, lam, self._alpha(), u, C=self.C_).slack
                          for w in self.omegas] for u in family])

    def predict(self, family):
        """``True`` where the inequality holds (slack >= 0)."""
        return self.transform(family) >= 0


def export_reports_csv(reports, path):
    cols = ["omega", "lambda", "field_id", "lhs_boundary", "lhs_volume", "rhs_volume", "rhs_boundary", "slack"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in reports:
            w.writerow([repr(r.omega), repr(r.lam), r.field_id, repr(r.lhs_boundary), repr(r.lhs_volume),
                        repr(r.rhs_volume), repr(r.rhs_boundary), repr(r.slack)])


def report_dict(r):
    d = asdict(r)
    d["slack"] = r.slack
    return d
