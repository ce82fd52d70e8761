"""
Grid potentials, zero extension to a periodic box, and discrete Sobolev norms.

Fourier conventions: ``fourier_transform`` returns the non-unitary transform
``int q(x) exp(-i xi.x) dx``; Sobolev norms are normalised so that
``sobolev_norm(q, 0)`` equals the L2 norm.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_interior_field


@dataclass(frozen=True)
class PeriodicEmbedding:
    """Zero extension of interior grid values onto a periodic lattice of side ``L``."""

    N: tuple
    h: float
    origin: np.ndarray
    index: np.ndarray  # flat periodic index of each interior node

    @property
    def L(self):
        return self.N[0] * self.h

    def wavenumbers(self):
        ks = [2 * np.pi * np.fft.fftfreq(m, d=self.h) for m in self.N]
        return np.meshgrid(*ks, indexing="ij")

    def embed(self, values):
        out = np.zeros(int(np.prod(self.N)), dtype=np.asarray(values).dtype)
        out[self.index] = values
        return out.reshape(self.N)


def periodic_embedding(grid, side=None):
    """Place the grid's lattice inside a periodic box of side >= ``side`` (default ``2R``)."""
    side = 2 * grid.R if side is None else side
    m = max(int(np.ceil(side / grid.h - 1e-9)), max(grid.lattice_shape))
    m += m % 2
    N = (m,) * grid.n
    pad = np.array([(m - s) // 2 for s in grid.lattice_shape])
    lidx = np.array(np.unravel_index(grid.interior, grid.lattice_shape)).T + pad
    strides = np.array([m ** (grid.n - 1 - d) for d in range(grid.n)])
    origin = grid.origin - pad * grid.h
    return PeriodicEmbedding(N=N, h=grid.h, origin=origin, index=lidx @ strides)


@dataclass(frozen=True)
class FourierField:
    """Non-unitary Fourier samples ``q_hat(k)`` on the lattice ``2 pi Z^n / L``."""

    k: tuple  # meshgrid of wavenumbers
    values: np.ndarray
    n: int
    L: float

    @property
    def cell_volume(self):
        return (2 * np.pi / self.L) ** self.n

    @property
    def kabs(self):
        return np.sqrt(sum(kk ** 2 for kk in self.k))


def fourier_field(grid, values, emb=None):
    emb = periodic_embedding(grid) if emb is None else emb
    arr = emb.embed(np.asarray(values, dtype=complex))
    k = emb.wavenumbers()
    # phase fix: the FFT assumes the lattice starts at x = 0
    phase = np.exp(-1j * sum(kk * o for kk, o in zip(k, emb.origin)))
    return FourierField(k=tuple(k), values=np.fft.fftn(arr) * grid.h ** grid.n * phase, n=grid.n, L=emb.L)


def sobolev_norm(grid, values, s, emb=None):
    """Spectral ``H^s`` norm of the zero-extended field, ``s`` may be negative."""
    ff = fourier_field(grid, values, emb)
    weight = (1.0 + ff.kabs ** 2) ** s
    total = np.sum(weight * np.abs(ff.values) ** 2) * ff.cell_volume / (2 * np.pi) ** grid.n
    return float(np.sqrt(total))


def l2_norm(grid, values):
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * grid.cell_volume))


def fourier_transform(grid, values, xi):
    """Direct quadrature of ``int q exp(-i xi.x) dx`` at one or several ``xi``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    pts = grid.interior_points
    out = np.exp(-1j * xi @ pts.T) @ np.asarray(values) * grid.cell_volume
    return out if len(out) > 1 else complex(out[0])


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Real potential sampled at the interior nodes of a grid.

    ``s`` is the smoothness order of the admissible class and ``M`` its
    ``H^s`` bound.
    """

    grid: object
    values: np.ndarray
    s: int = 2
    M: float = np.inf
    name: str = ""
    _hash: str = field(default="", repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(check_interior_field(self.grid, self.values, "potential"), dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        n = self.grid.n
        if self.s < n // 2 + 1:
            raise ValueError(f"smoothness s={self.s} below [n/2]+1 = {n // 2 + 1}")
        digest = hashlib.sha256(v.tobytes() + self.grid.hash.encode()).hexdigest()[:16]
        object.__setattr__(self, "_hash", digest)

    @property
    def hash(self):
        return self._hash

    @property
    def grid_hash(self):
        return self.grid.hash

    def sobolev_norm(self, s=None):
        return sobolev_norm(self.grid, self.values, self.s if s is None else s)

    def is_admissible(self):
        return self.sobolev_norm() <= self.M

    def linfty(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def __sub__(self, other):
        return self.values - other.values


def zero_potential(grid, s=2, M=np.inf):
    return PotentialField(grid, np.zeros(grid.n_interior), s=s, M=M, name="zero")
