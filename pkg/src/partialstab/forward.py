"""
Finite-difference solver for ``(-Laplace - omega^2 + q) u = 0`` with Dirichlet data.

The system is assembled once per ``(q, omega)`` and factorized with a sparse
LU; the factorization is reused for every right-hand side, which is what the
DN-map assembly needs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import AssumptionViolation, check_face_field, check_interior_field

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


def _laplacian_blocks(grid):
    """Rows of ``-Laplace_h`` at interior nodes, split into interior/boundary columns."""
    lshape = grid.lattice_shape
    strides = [int(np.prod(lshape[d + 1:])) for d in range(grid.n)]
    rows, cols, vals = [], [], []
    I = grid.interior
    h2 = grid.h ** 2
    rows.append(np.arange(len(I)))
    cols.append(I)
    vals.append(np.full(len(I), 2.0 * grid.n / h2))
    for st in strides:
        for sgn in (-1, 1):
            rows.append(np.arange(len(I)))
            cols.append(I + sgn * st)
            vals.append(np.full(len(I), -1.0 / h2))
    full = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(len(I), grid.n_lattice)).tocsc()
    return full[:, grid.interior].tocsr(), full[:, grid.boundary_nodes].tocsr()


def assemble_operator(grid, q, omega):
    """Return ``(A, B)``: interior matrix of ``-Laplace_h - omega^2 + q`` and the
    boundary coupling, so that ``A u = -B (T f)`` is the discrete BVP."""
    if q.grid_hash != grid.hash:
        raise ValueError("potential lives on a different grid")
    if omega < 0:
        raise ValueError("omega must be non-negative")
    lap, bnd = _laplacian_blocks(grid)
    A = lap + sp.diags(q.values - omega ** 2)
    return A.tocsc(), bnd


@dataclass
class FrequencyCheck:
    omega: float
    eigenvalues: np.ndarray
    dist_to_spectrum: float
    c_small: float
    passes_A: bool
    passes_B: bool
    reliability_cutoff: float
    zero_tol: float

    @property
    def passes(self):
        return self.passes_A and self.passes_B


def reliability_cutoff(grid):
    # modes with k h <= pi/2 per axis carry < 20% dispersion error
    return grid.n * (np.pi / (2 * grid.h)) ** 2


def _eigs_near(A0, sigma, k):
    k = min(k, A0.shape[0] - 1)
    if A0.shape[0] <= 600:
        w = np.linalg.eigvalsh(A0.toarray())
        order = np.argsort(np.abs(w - sigma))[:k]
        return np.sort(w[order])
    try:
        w = spla.eigsh(A0, k=k, sigma=sigma, which="LM", return_eigenvectors=False, tol=1e-10)
    except (spla.ArpackNoConvergence, RuntimeError) as exc:
        raise ConvergenceFailure(f"eigen-solver did not converge near {sigma}: {exc}") from exc
    return np.sort(w)


class ConvergenceFailure(RuntimeError):
    """Eigen-solver failure, distinct from an assumption failure."""


def dirichlet_spectrum_check(grid, q, omega, k=6, c_small=1e-3, zero_tol=None):
    """Check assumptions (A) and (B) against the discrete Dirichlet spectrum of ``-Laplace + q``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    A0, _ = assemble_operator(grid, q, 0.0)
    lowest = _eigs_near(A0, -abs(q.values.min(initial=0.0)) - 1.0, k)
    near = _eigs_near(A0, omega ** 2, min(4, k))
    cutoff = reliability_cutoff(grid)
    eigs = np.unique(np.concatenate([lowest, near]))
    resolved = eigs[eigs <= cutoff]
    zero_tol = 1e-8 * max(1.0, np.abs(eigs).max()) if zero_tol is None else zero_tol
    passes_A = not np.any(np.abs(eigs) <= zero_tol)
    dist = float(np.min(np.abs(resolved - omega ** 2))) if resolved.size else np.inf
    # at omega = 0 assumption (B) reduces to (A)
    threshold = c_small * omega ** (2 - grid.n) if omega > 0 else 0.0
    passes_B = dist > threshold
    return FrequencyCheck(omega=omega, eigenvalues=lowest, dist_to_spectrum=dist, c_small=c_small,
                          passes_A=passes_A, passes_B=bool(passes_B), reliability_cutoff=cutoff,
                          zero_tol=zero_tol)


class HelmholtzSolver:
    """Factorized discrete BVP for one ``(grid, q, omega)``.

    Parameters
    ----------
    check : bool
        Run :func:`dirichlet_spectrum_check` first and refuse to build when
        (A) or (B) fails.
    """

    def __init__(self, grid, q, omega, check=True, c_small=1e-3, cond_limit=COND_LIMIT):
        self.grid, self.q, self.omega = grid, q, float(omega)
        ctx = {"q_id": q.hash, "omega": self.omega}
        self.frequency_check = None
        if check:
            fc = dirichlet_spectrum_check(grid, q, omega, c_small=c_small)
            self.frequency_check = fc
            if not fc.passes_A:
                raise AssumptionViolation("0 is a Dirichlet eigenvalue of -Laplace+q", "assumption_A", ctx)
            if not fc.passes_B:
                raise AssumptionViolation(
                    f"omega^2 within {fc.dist_to_spectrum:.3g} of the Dirichlet spectrum", "assumption_B", ctx)
        self.A, self.B = assemble_operator(grid, q, omega)
        try:
            self._lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise AssumptionViolation(f"singular system: {exc}", "singular", ctx) from exc
        self.condition = self._condition_estimate()
        if not np.isfinite(self.condition) or self.condition > cond_limit:
            raise AssumptionViolation(f"near-singular system, cond ~ {self.condition:.3g}", "near_singular", ctx)

    def _condition_estimate(self):
        n = self.A.shape[0]
        inv = spla.LinearOperator((n, n), matvec=self._lu.solve, rmatvec=lambda x: self._lu.solve(x, trans="T"),
                                  dtype=float)
        if n <= 3:
            return float(np.linalg.cond(self.A.toarray(), 1))
        return float(spla.onenormest(self.A) * spla.onenormest(inv))

    def _solve(self, rhs):
        if np.iscomplexobj(rhs):
            return self._lu.solve(np.ascontiguousarray(rhs.real)) + 1j * self._lu.solve(np.ascontiguousarray(rhs.imag))
        return self._lu.solve(np.ascontiguousarray(rhs))

    def solve(self, f):
        """Interior solution for face Dirichlet data ``f`` (vector or column block)."""
        f = check_face_field(self.grid, f)
        rhs = -(self.B @ (self.grid.trace_matrix @ f))
        return self._solve(rhs)

    def solve_source(self, g):
        """Interior solution of ``L_q w = g`` with zero boundary data."""
        return self._solve(np.asarray(g))

    def residual(self, u, f):
        rhs = -(self.B @ (self.grid.trace_matrix @ f))
        return float(np.linalg.norm(self.A @ u - rhs) / max(np.linalg.norm(rhs), 1e-300))


def solve_dirichlet(grid, q, omega, f, check=True, c_small=1e-3):
    return HelmholtzSolver(grid, q, omega, check=check, c_small=c_small).solve(f)


def neumann_trace(grid, u, f, scheme="one_sided"):
    """Outward normal derivative at each face of the field with interior values
    ``u`` and Dirichlet data ``f``.

    ``scheme="one_sided"`` uses second-order one-sided differences along the
    normal; ``scheme="green"`` uses the discrete Green flux, which is what
    makes assembled DN matrices self-adjoint.
    """
    op = {"one_sided": grid.flux_matrix, "green": grid.green_flux_matrix}[scheme]
    u = np.asarray(u)
    if u.ndim == 1:
        check_interior_field(grid, u)
    full = np.zeros((grid.n_lattice,) + u.shape[1:], dtype=np.result_type(u, f))
    full[grid.interior] = u
    full[grid.boundary_nodes] = grid.trace_matrix @ f
    return op @ full


def apply_operator(grid, q, omega, u_lattice):
    """``(-Laplace_h - omega^2 + q) u`` at interior nodes for a full lattice field."""
    A, B = assemble_operator(grid, q, omega)
    return A @ u_lattice[grid.interior] + B @ u_lattice[grid.boundary_nodes]
