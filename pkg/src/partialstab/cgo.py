"""
Complex geometrical optics (CGO) solutions ``u = exp(i x.zeta) (1 + r)``.

The remainder solves ``(-Laplace - 2i zeta.grad) r = -q (1 + r)`` on a periodic
box that contains the domain. The inverse of the left side is the Fourier
multiplier ``1 / (|k|^2 + 2 zeta.k)`` (the Faddeev symbol). On an unshifted
lattice this symbol vanishes at ``k = 0``, so the remainder is represented as
``r = exp(i d.x) p`` with ``p`` periodic and ``d`` half a lattice step along
the dominant axis of ``Im zeta``. This is the usual shifted-lattice trick: the
imaginary part ``2 Im(zeta).(k + d)`` then never vanishes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import ConvergenceError, check_unit_vector
from .fields import PotentialField

log = logging.getLogger(__name__)

SYMBOL_FLOOR = 1e-8
ORTHO_TOL = 1e-10


class SymbolFloorError(ConvergenceError):
    """Too many discrete frequencies sit on the zero set of the Faddeev symbol."""


@dataclass(frozen=True)
class ZetaPair:
    xi: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    lam: float
    omega: float
    zeta1: np.ndarray
    zeta2: np.ndarray
    s_mag: float

    def invariant_errors(self):
        """Largest deviation in ``zeta.zeta = omega^2`` and ``|zeta|^2 = omega^2 + 2 lam^2``."""
        w2, z2 = self.omega ** 2, self.omega ** 2 + 2 * self.lam ** 2
        e1 = max(abs(np.dot(z, z) - w2) for z in (self.zeta1, self.zeta2))
        e2 = max(abs(np.vdot(z, z).real - z2) for z in (self.zeta1, self.zeta2))
        return float(e1), float(e2)


def make_zeta_pair(xi, alpha, beta, lam, omega):
    """Frequency vectors for a target mode ``xi``.

    ``zeta1 = xi/2 + i lam alpha - s beta`` and
    ``zeta2 = -xi/2 - i lam alpha - s beta`` with
    ``s = sqrt(omega^2 + lam^2 - |xi|^2/4)``; both satisfy ``zeta.zeta = omega^2``.

    Examples
    --------
    >>> p = make_zeta_pair([0, 0, 2], [1, 0, 0], [0, 1, 0], 1.0, 2.0)
    >>> p.zeta1
    array([ 0.+1.j, -2.+0.j,  1.+0.j])
    """
    xi = np.asarray(xi, dtype=float)
    alpha = check_unit_vector(alpha)
    beta = check_unit_vector(beta)
    if not (xi.shape == alpha.shape == beta.shape == (3,)):
        raise ValueError("CGO pairs are built for n = 3 only (three orthogonal directions needed)")
    for a, b, name in ((xi, alpha, "xi.alpha"), (xi, beta, "xi.beta"), (alpha, beta, "alpha.beta")):
        if abs(a @ b) > ORTHO_TOL * max(1.0, np.linalg.norm(a) * np.linalg.norm(b)):
            raise ValueError(f"orthogonality violated: {name} = {a @ b:.3g}")
    radicand = omega ** 2 + lam ** 2 - xi @ xi / 4.0
    if radicand <= 0:
        raise ValueError(f"omega^2 + lambda^2 - |xi|^2/4 = {radicand:.3g} must be > 0")
    s = float(np.sqrt(radicand))
    z1 = xi / 2 + 1j * lam * alpha - s * beta
    z2 = -xi / 2 - 1j * lam * alpha - s * beta
    return ZetaPair(xi, alpha, beta, float(lam), float(omega), z1, z2, s)


def orthonormal_frame(xi, rng=None):
    """Unit ``alpha``, ``beta`` with ``xi``, ``alpha``, ``beta`` pairwise orthogonal.

    Deterministic when ``rng`` is None: the coordinate axis least aligned with
    ``xi`` seeds the Gram-Schmidt step.
    """
    xi = np.asarray(xi, dtype=float)
    nx = np.linalg.norm(xi)
    e = xi / nx if nx > 0 else np.array([0.0, 0.0, 1.0])
    seed = rng.standard_normal(3) if rng is not None else np.eye(3)[np.argmin(np.abs(e))]
    a = seed - (seed @ e) * e
    a /= np.linalg.norm(a)
    b = np.cross(e, a)
    return a, b / np.linalg.norm(b)


def _box_samples(q, side, N, center):
    """Zero-extended samples of ``q`` on the periodic lattice; returns (array, origin, spacing)."""
    if isinstance(q, PotentialField):
        g = q.grid
        spacing = g.h
        m = max(int(np.ceil(side / spacing - 1e-9)), max(g.lattice_shape))
        m += m % 2
        pad = np.array([(m - s) // 2 for s in g.lattice_shape])
        origin = g.origin - pad * spacing
        arr = np.zeros((m,) * g.n)
        idx = np.array(np.unravel_index(g.interior, g.lattice_shape)).T + pad
        arr[tuple(idx.T)] = q.values
        return arr, origin, spacing
    N = 32 if N is None else int(N)
    spacing = side / N
    origin = np.asarray(center, dtype=float) - side / 2
    axes = [origin[d] + spacing * np.arange(N) for d in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return np.asarray(q(pts), dtype=float).reshape((N,) * 3), origin, spacing


@dataclass(eq=False)
class CGOSolution:
    """Remainder ``r`` on the periodic box and the CGO field built from it.

    ``p_hat`` holds ``fftn(exp(-i d.x) r)`` for nodes ``origin + spacing*j``.
    """

    zeta: np.ndarray
    box_side: float
    origin: np.ndarray
    spacing: float
    shift: np.ndarray
    p_hat: np.ndarray
    iterations: int
    residual: float
    symbol_min: float
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.p_hat.shape[0]

    def _k(self):
        k1 = 2 * np.pi * np.fft.fftfreq(self.N, d=self.spacing)
        return [k1[:, None, None] + self.shift[0], k1[None, :, None] + self.shift[1],
                k1[None, None, :] + self.shift[2]]

    def remainder_nodes(self):
        """``r`` at the periodic nodes (shape ``(N, N, N)``)."""
        return self._nodes(self.p_hat)

    def _nodes(self, p_hat):
        x = self.node_coords()
        return np.fft.ifftn(p_hat) * np.exp(1j * sum(d * xx for d, xx in zip(self.shift, x)))

    def node_coords(self):
        ax = [self.origin[d] + self.spacing * np.arange(self.N) for d in range(3)]
        return np.meshgrid(*ax, indexing="ij")

    def _aligned_index(self, points):
        j = (points - self.origin) / self.spacing
        jr = np.rint(j)
        if np.all(np.abs(j - jr) < 1e-8) and np.all((jr >= 0) & (jr < self.N)):
            return tuple(jr.astype(int).T)
        return None

    def _eval(self, p_hat, points, chunk=256):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx = self._aligned_index(points)
        if idx is not None:
            return self._nodes(p_hat)[idx]
        # trigonometric interpolation, contracted one axis at a time
        k1 = 2 * np.pi * np.fft.fftfreq(self.N, d=self.spacing)
        rel = points - self.origin
        out = np.empty(len(points), dtype=complex)
        for i0 in range(0, len(points), chunk):
            r = rel[i0:i0 + chunk]
            E = [np.exp(1j * np.outer(r[:, d], k1)) for d in range(3)]
            t = np.einsum("abc,pc->pab", p_hat, E[2])
            t = np.einsum("pab,pb->pa", t, E[1])
            out[i0:i0 + chunk] = np.einsum("pa,pa->p", t, E[0]) / self.N ** 3
        return out * np.exp(1j * points @ self.shift)

    def remainder_at(self, points):
        return self._eval(self.p_hat, points)

    def remainder_gradient_at(self, points):
        k = self._k()
        return np.stack([self._eval(1j * kk * self.p_hat, points) for kk in k], axis=-1)

    def remainder_hessian_at(self, points):
        k = self._k()
        return np.stack([np.stack([self._eval(-ki * kj * self.p_hat, points) for kj in k], -1) for ki in k], -2)

    def u_at(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.exp(1j * points @ self.zeta) * (1.0 + self.remainder_at(points))

    def grad_u_at(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        e = np.exp(1j * points @ self.zeta)
        r = self.remainder_at(points)
        return e[:, None] * (1j * self.zeta[None, :] * (1 + r)[:, None] + self.remainder_gradient_at(points))

    def hessian_u_at(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        e = np.exp(1j * points @ self.zeta)
        r = self.remainder_at(points)
        g = self.remainder_gradient_at(points)
        z = self.zeta
        H = self.remainder_hessian_at(points)
        H = H + 1j * (z[None, :, None] * g[:, None, :] + z[None, None, :] * g[:, :, None])
        H = H - (z[:, None] * z[None, :])[None] * (1 + r)[:, None, None]
        return e[:, None, None] * H

    def hs_norm(self, s=2):
        """Spectral ``H^s`` norm of ``r`` over the periodic box (an upper bound for the norm on the domain)."""
        k2 = sum(kk ** 2 for kk in self._k())
        vol = self.spacing ** 3
        return float(np.sqrt(np.sum((1 + k2) ** s * np.abs(self.p_hat) ** 2) * vol / self.N ** 3))

    def on_grid(self, grid):
        """CGO values at every lattice node of ``grid`` (flat, lattice order)."""
        return self.u_at(grid.lattice_points())

    def export(self, path, grid):
        from .potentials import write_grid_field

        write_grid_field(path, grid, self.u_at(grid.interior_points))


def solve_remainder(q, zeta, s=2, tol=1e-10, max_iter=200, N=None, margin=0.5, R=1.0, center=(0.0, 0.0, 0.0),
                    floor=SYMBOL_FLOOR):
    """Fixed-point solve ``r <- G_zeta[-q (1 + r)]`` on a periodic box of side ``2R(1+margin)``.

    Parameters
    ----------
    q : PotentialField or callable
        A grid potential is zero-extended at its own spacing; a callable is
        sampled on an ``N^3`` lattice.
    zeta : complex array, shape (3,)
    tol : float
        Stop when the relative update drops below ``tol``.

    Raises
    ------
    ConvergenceError
        No convergence in ``max_iter`` steps: ``|zeta|`` is too small for ``q``.
    SymbolFloorError
        The symbol is below ``floor * |zeta|^2`` on more than 0.1% of modes.
    """
    zeta = np.asarray(zeta, dtype=complex)
    if zeta.shape != (3,):
        raise ValueError("zeta must be a complex 3-vector")
    if isinstance(q, PotentialField):
        R = q.grid.R
    side = 2 * R * (1 + margin)
    qarr, origin, spacing = _box_samples(q, side, N, center)
    M = qarr.shape[0]
    axis = int(np.argmax(np.abs(zeta.imag)))
    shift = np.zeros(3)
    shift[axis] = np.pi / (M * spacing)
    k1 = 2 * np.pi * np.fft.fftfreq(M, d=spacing)
    k = [k1[:, None, None] + shift[0], k1[None, :, None] + shift[1], k1[None, None, :] + shift[2]]
    symbol = sum(kk ** 2 for kk in k) + 2 * sum(z * kk for z, kk in zip(zeta, k))
    zabs2 = float(np.vdot(zeta, zeta).real)
    small = np.abs(symbol) < floor * max(zabs2, 1.0)
    if small.mean() > 1e-3:
        raise SymbolFloorError(f"Faddeev symbol below floor on {small.mean():.2%} of modes")
    inv = np.where(small, 0.0, 1.0 / np.where(small, 1.0, symbol))
    x = np.meshgrid(*[origin[d] + spacing * np.arange(M) for d in range(3)], indexing="ij")
    demod = np.exp(-1j * sum(d * xx for d, xx in zip(shift, x)))  # r = conj(demod) p

    sol = CGOSolution(zeta=zeta, box_side=M * spacing, origin=np.asarray(origin, dtype=float), spacing=spacing,
                      shift=shift, p_hat=np.zeros((M,) * 3, dtype=complex), iterations=0, residual=0.0,
                      symbol_min=float(np.abs(symbol).min()))
    if not np.any(qarr):
        return sol
    qdemod = qarr * demod
    p_hat = -inv * np.fft.fftn(qdemod)
    for it in range(1, max_iter + 1):
        p = np.fft.ifftn(p_hat)
        new = -inv * np.fft.fftn(qdemod + qarr * p)
        upd = np.linalg.norm(new - p_hat) / max(np.linalg.norm(new), 1e-300)
        p_hat = new
        if not np.isfinite(upd) or upd > 1e6:
            raise ConvergenceError(f"CGO fixed point diverges at |zeta| = {np.sqrt(zabs2):.3g}")
        if upd < tol:
            break
    else:
        raise ConvergenceError(f"CGO fixed point not converged in {max_iter} steps (update {upd:.2e})")
    # residual of the conjugated equation in Fourier space
    rhs = np.fft.fftn(qdemod + qarr * np.fft.ifftn(p_hat))
    res = np.linalg.norm(symbol * p_hat + rhs) / max(np.linalg.norm(rhs), 1e-300)
    sol.p_hat, sol.iterations, sol.residual = p_hat, it, float(res)
    return sol


def solve_cgo(q, pair, which=1, perturb=1e-6, **kw):
    """CGO for ``pair.zeta1`` or ``pair.zeta2``; on a symbol-floor hit, ``lambda`` is nudged by ``perturb`` once."""
    try:
        return solve_remainder(q, pair.zeta1 if which == 1 else pair.zeta2, **kw), pair
    except SymbolFloorError:
        log.warning("symbol floor hit at lambda=%g; perturbing by %g", pair.lam, perturb)
        pair = make_zeta_pair(pair.xi, pair.alpha, pair.beta, pair.lam + perturb, pair.omega)
        return solve_remainder(q, pair.zeta1 if which == 1 else pair.zeta2, **kw), pair


def remainder_ratio(sol, q_norm, s=2):
    """``||r||_{H^s} |zeta| / ||q||_{H^s}``: the constant in the remainder bound."""
    if q_norm == 0:
        return 0.0
    return sol.hs_norm(s) * float(np.linalg.norm(sol.zeta)) / q_norm


def verify_remainder_bound(sol, q_norm, C1, s=2):
    """Return ``(ratio <= C1, ratio)``."""
    ratio = remainder_ratio(sol, q_norm, s)
    return bool(ratio <= C1), ratio


def discrete_hk_norm(sol, grid, order=1):
    """``H^1`` or ``H^2`` norm of ``u`` on the domain by interior-node quadrature."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    pts = grid.interior_points
    total = np.sum(np.abs(sol.u_at(pts)) ** 2) + np.sum(np.abs(sol.grad_u_at(pts)) ** 2)
    if order == 2:
        total += np.sum(np.abs(sol.hessian_u_at(pts)) ** 2)
    return float(np.sqrt(total * grid.cell_volume))


def cgo_norm_bounds(sol, grid, order=1, C=None, lam=None, omega=None):
    """Return ``(norm, bound)`` with ``bound = C (omega^2 + 2 lam^2)^{order/2} exp(lam R)``.

    ``lam`` defaults to ``|Im zeta|`` and ``omega^2`` to ``Re(zeta.zeta)``.
    """
    C = CGO_CONSTANTS["C_norm"][order] if C is None else C
    lam = float(np.linalg.norm(sol.zeta.imag)) if lam is None else lam
    w2 = float(np.dot(sol.zeta, sol.zeta).real) if omega is None else omega ** 2
    bound = C * (w2 + 2 * lam ** 2) ** (order / 2) * np.exp(lam * grid.R)
    return discrete_hk_norm(sol, grid, order), float(bound)


# Frozen output of CGOCalibrator(lambdas=geomspace(0.05, 1e3, 30)) on
# calibration_suite() (N = 32, s = 2); C_norm is 1.5x the worst ratio seen for
# three suite members, lambda in {1, 2, 4, 8}, omega in {2, 5} at h = 1/8.
# Regenerate with `partialstab cgo-check --calibrate`.
CGO_CONSTANTS = {"C1": 0.1914, "C2": 0.3840, "C_norm": {1: 0.52, 2: 0.53}}


def calibration_suite(n_potentials=10, seed=0):
    """Ten tapered Gaussian bumps with random centres, widths and amplitudes."""
    from .potentials import GaussianBump

    rng = np.random.default_rng(seed)
    return [GaussianBump(float(rng.uniform(0.5, 3.0)) * rng.choice([-1, 1]), tuple(rng.uniform(-0.15, 0.15, 3)),
                         float(rng.uniform(0.08, 0.2))) for _ in range(n_potentials)]


def analytic_hs_norm(q, s=2, N=32, margin=0.5, R=1.0):
    """Spectral ``H^s`` norm of a callable potential on the same box the CGO solver uses."""
    qarr, origin, spacing = _box_samples(q, 2 * R * (1 + margin), N, (0.0, 0.0, 0.0))
    k1 = 2 * np.pi * np.fft.fftfreq(qarr.shape[0], d=spacing)
    k2 = k1[:, None, None] ** 2 + k1[None, :, None] ** 2 + k1[None, None, :] ** 2
    qh = np.fft.fftn(qarr) * spacing ** 3
    L = qarr.shape[0] * spacing
    return float(np.sqrt(np.sum((1 + k2) ** s * np.abs(qh) ** 2) / L ** 3))


class CGOCalibrator(BaseEstimator):
    """Empirical ``C1``, ``C2`` for the remainder bound.

    ``fit`` scans ``lambda`` upward (``zeta`` with ``xi = 0``) for each
    potential; ``C2`` is the largest ``|zeta| / ||q||_{H^s}`` at which the fixed
    point first converges within ``max_iter`` steps, ``C1`` is ``safety`` times
    the worst remainder ratio seen at or above that threshold.
    """

    def __init__(self, s=2, N=32, omega=2.0, lambdas=None, max_iter=200, safety=1.5):
        self.s = s
        self.N = N
        self.omega = omega
        self.lambdas = lambdas
        self.max_iter = max_iter
        self.safety = safety

    def fit(self, potentials, y=None):
        lambdas = np.geomspace(1, 1e3, 25) if self.lambdas is None else np.asarray(self.lambdas)
        alpha, beta = np.eye(3)[0], np.eye(3)[1]
        c2, ratios, records = [], [], []
        for i, q in enumerate(potentials):
            qn = analytic_hs_norm(q, self.s, self.N)
            first = None
            for lam in lambdas:
                pair = make_zeta_pair(np.zeros(3), alpha, beta, lam, self.omega)
                try:
                    sol, pair = solve_cgo(q, pair, N=self.N, max_iter=self.max_iter)
                except ConvergenceError:
                    first = None
                    continue
                zn = float(np.linalg.norm(pair.zeta1))
                first = zn if first is None else first
                r = remainder_ratio(sol, qn, self.s)
                ratios.append(r)
                records.append((i, float(lam), zn, qn, r, sol.iterations))
            if first is None:
                raise ConvergenceError(f"potential {i}: no lambda in the scan converged")
            c2.append(first / qn)
        self.C2_ = float(max(c2))
        self.C1_ = float(self.safety * max(ratios))
        self.records_ = records
        return self

    def predict(self, X):
        """``True`` where ``|zeta| > C2 ||q||`` for rows ``(|zeta|, ||q||)``."""
        X = np.atleast_2d(X)
        return X[:, 0] > self.C2_ * X[:, 1]
