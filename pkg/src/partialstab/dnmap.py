"""
Discrete full and partial Dirichlet-to-Neumann maps.

The boundary basis is the set of face indicators, so rows and columns of a
DN matrix are indexed by faces. Boundary Sobolev norms of order ``t`` are
realized through powers ``(I + L_B)^t`` of the face-adjacency graph
Laplacian ``L_B``.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from ._validation import AssumptionViolation, ConvergenceError
from .forward import HelmholtzSolver, neumann_trace
from .records import content_key, write_record

log = logging.getLogger(__name__)

SOLVE_COUNTER = {"dn_builds": 0}


@dataclass(frozen=True, eq=False)
class DNOperator:
    grid: object
    q_id: str
    omega: float
    matrix: np.ndarray
    rows: np.ndarray = None
    restriction: object = None
    src_order: float = 1.5
    tgt_order: float = 0.5
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rows is None:
            object.__setattr__(self, "rows", np.arange(self.grid.n_faces))
        self.matrix.setflags(write=False)

    @property
    def grid_hash(self):
        return self.grid.hash

    def __sub__(self, other):
        if other.grid.hash != self.grid.hash:
            raise ValueError("DN operators live on different grids")
        if not np.array_equal(self.rows, other.rows):
            raise ValueError("DN operators have different row sets")
        return DNOperator(self.grid, f"{self.q_id}-{other.q_id}", self.omega,
                          np.asarray(self.matrix - other.matrix), self.rows, self.restriction)

    def apply(self, f):
        return self.matrix @ f

    def symmetry_defect(self):
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise ValueError("symmetry defect needs the full operator")
        # DN rows carry d_nu u per face; the symmetric form weights by dS
        w = m * self.grid.face_area[:, None]
        return float(np.linalg.norm(w - w.T) / max(np.linalg.norm(w), 1e-300))

    def full_rows(self):
        """Operator embedded in all face rows, zero outside ``rows``."""
        out = np.zeros((self.grid.n_faces, self.matrix.shape[1]), dtype=self.matrix.dtype)
        out[self.rows] = self.matrix
        return out


def build_dn(grid, q, omega, chunk=256, n_jobs=1, check=True, c_small=1e-3):
    """Assemble the full discrete DN matrix, one factorization for all columns."""
    SOLVE_COUNTER["dn_builds"] += 1
    log.info("DN solve: q_id=%s omega=%g faces=%d", q.hash, omega, grid.n_faces)
    try:
        solver = HelmholtzSolver(grid, q, omega, check=check, c_small=c_small)
    except AssumptionViolation as exc:
        exc.context.update(q_id=q.hash, omega=omega)
        raise AssumptionViolation(f"{exc} (q_id={q.hash}, omega={omega})", exc.reason, exc.context) from exc
    F = grid.n_faces
    out = np.empty((F, F))

    def block(j0):
        E = np.zeros((F, min(chunk, F - j0)))
        E[j0 + np.arange(E.shape[1]), np.arange(E.shape[1])] = 1.0
        out[:, j0:j0 + E.shape[1]] = neumann_trace(grid, solver.solve(E), E, scheme="green")

    starts = range(0, F, chunk)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            list(pool.map(block, starts))
    else:
        for j0 in starts:
            block(j0)
    return DNOperator(grid, q.hash, float(omega), out, meta={"condition": solver.condition})


def restrict_partial(dn, part):
    if part.grid_hash != dn.grid.hash:
        raise ValueError("partition built on a different grid")
    keep = np.intersect1d(dn.rows, part.minus_eps)
    sel = np.searchsorted(dn.rows, keep)
    return replace(dn, matrix=np.asarray(dn.matrix[sel]), rows=keep, restriction=part)


def face_adjacency(grid):
    tree = cKDTree(grid.face_centers)
    pairs = np.array(sorted(tree.query_pairs(grid.h * (1 + 1e-6))), dtype=int).reshape(-1, 2)
    return pairs


class BoundaryNormCalculus:
    """Graph Laplacian of the face mesh and its fractional powers."""

    def __init__(self, grid):
        self.grid_hash = grid.hash
        F = grid.n_faces
        pairs = face_adjacency(grid)
        W = np.zeros((F, F))
        W[pairs[:, 0], pairs[:, 1]] = W[pairs[:, 1], pairs[:, 0]] = 1.0
        self.laplacian = np.diag(W.sum(axis=1)) - W
        mu, V = np.linalg.eigh(self.laplacian)
        self.eigenvalues = np.clip(mu, 0.0, None)
        self.eigenvectors = V
        self._powers = {}

    def power(self, t):
        if t not in self._powers:
            V = self.eigenvectors
            self._powers[t] = (V * (1.0 + self.eigenvalues) ** t) @ V.T
        return self._powers[t]

    def sobolev_norm(self, f, t):
        return float(np.linalg.norm(self.power(t / 2.0) @ f))


def _power_iteration(M, tol=1e-6, max_iter=10_000, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(M.shape[1]) + 0j
    x /= np.linalg.norm(x)
    prev = 0.0
    for it in range(max_iter):
        y = M.conj().T @ (M @ x)
        sigma2 = float(np.real(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0, it
        x = y / ny
        if it > 0 and abs(sigma2 - prev) <= tol * abs(sigma2):
            return float(np.sqrt(max(sigma2, 0.0))), it
        prev = sigma2
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def fractional_matrix(a, calc):
    if calc.grid_hash != a.grid.hash:
        raise ValueError("norm calculus built on a different grid")
    tgt = calc.power(a.tgt_order / 2.0)
    src_inv = calc.power(-a.src_order / 2.0)
    return tgt @ a.full_rows() @ src_inv


def operator_norm_fractional(a, calc, tol=1e-6, max_iter=10_000, method="power"):
    """``|| (I+L)^{1/4} P A (I+L)^{-3/4} ||_2``: the H^{3/2} -> H^{1/2} norm."""
    M = fractional_matrix(a, calc)
    if not np.any(M):
        return 0.0
    if method == "svd":
        return float(np.linalg.norm(M, 2))
    return _power_iteration(M, tol, max_iter)[0]


def dn_cache_key(grid, q, omega, tol=1e-10):
    return content_key("dn", grid.describe(), q.hash, float(omega), tol)


def cached_build_dn(cache, grid, q, omega, **kw):
    """Build or load a full DN matrix through a :class:`RecordCache`."""
    key = dn_cache_key(grid, q, omega)

    def compute():
        dn = build_dn(grid, q, omega, **kw)
        return dn.matrix, {"q_id": q.hash, "omega": float(omega), "grid": grid.describe()}

    if cache is None:
        return build_dn(grid, q, omega, **kw)
    mat, meta = cache.get_or_compute(key, compute)
    return DNOperator(grid, q.hash, float(omega), np.asarray(mat))


def export_dn(dn, path):
    """Binary record with face ids, complex entries and metadata."""
    meta = {"kind": "dn_operator", "q_id": dn.q_id, "omega": dn.omega, "grid": dn.grid.describe(),
            "row_faces": dn.rows.tolist(), "col_faces": list(range(dn.matrix.shape[1])),
            "src_order": dn.src_order, "tgt_order": dn.tgt_order}
    write_record(path, np.asarray(dn.matrix, dtype=complex), meta)


def export_dn_csv(dn, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_face", "col_face", "re", "im"])
        m = np.asarray(dn.matrix, dtype=complex)
        for i, r in enumerate(dn.rows):
            for j in range(m.shape[1]):
                if m[i, j] != 0:
                    w.writerow([int(r), j, repr(float(m[i, j].real)), repr(float(m[i, j].imag))])
