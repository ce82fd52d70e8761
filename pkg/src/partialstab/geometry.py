"""
Finite-difference domains with oriented boundary faces.

Two shapes are supported, an axis-aligned box and a ball, in two or three
dimensions. Nodes live on a uniform lattice of spacing ``h``. Boundary data
is carried by *faces* (cells of the boundary), and sparse operators link
faces to the lattice:

``trace_matrix``
    face values -> values at the boundary lattice nodes.
``flux_matrix``
    full lattice field -> outward normal derivative at each face
    (second-order one-sided differences).
``green_flux_matrix``
    full lattice field -> normal derivative read off the discrete Green
    formula; this is the flux used for DN maps.

On the box, ``face_area`` is the area each face carries in the discrete Green
formula, which is ``h^(n-1)`` except on faces touching an edge of the box.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._validation import check_dimension, check_unit_vector


@dataclass(frozen=True)
class Box:
    center: tuple
    half_widths: tuple

    @property
    def kind(self):
        return "box"


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    @property
    def kind(self):
        return "ball"


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """Discretized domain.

    Attributes
    ----------
    n : int
        Spatial dimension.
    shape : Box or Ball
    h : float
        Lattice spacing.
    origin : ndarray (n,)
        Coordinates of lattice node ``(0, ..., 0)``.
    lattice_shape : tuple of int
    interior : ndarray of int
        Flat (C-order) lattice indices of interior nodes.
    boundary_nodes : ndarray of int
        Flat lattice indices of boundary nodes reached by the stencil.
    face_centers, face_normals : ndarray (F, n)
    face_area : ndarray (F,)
        Area element ``dS`` of each face.
    face_axis, face_sign : ndarray (F,)
        Lattice axis and orientation of the staircase/box face.
    trace_matrix : sparse (len(boundary_nodes), F)
    flux_matrix : sparse (F, prod(lattice_shape))
        Second-order one-sided normal derivative.
    green_flux_matrix : sparse (F, prod(lattice_shape))
        Normal derivative from the discrete Green formula (the flux across the
        last lattice edge). DN maps built from it are self-adjoint in the
        ``dS``-weighted face inner product.
    R : float
        Radius with ``Omega`` inside ``B(0, R)`` and ``R >= 1``.
    """

    n: int
    shape: object
    h: float
    origin: np.ndarray
    lattice_shape: tuple
    interior: np.ndarray
    boundary_nodes: np.ndarray
    face_centers: np.ndarray
    face_normals: np.ndarray
    face_area: np.ndarray
    face_axis: np.ndarray
    face_sign: np.ndarray
    trace_matrix: sp.csr_matrix
    flux_matrix: sp.csr_matrix
    green_flux_matrix: sp.csr_matrix
    R: float
    _hash: str = field(default="", repr=False)

    @property
    def n_faces(self):
        return len(self.face_area)

    @property
    def n_interior(self):
        return len(self.interior)

    @property
    def n_lattice(self):
        return int(np.prod(self.lattice_shape))

    def lattice_points(self):
        axes = [self.origin[d] + self.h * np.arange(m) for d, m in enumerate(self.lattice_shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    @property
    def interior_points(self):
        return self.lattice_points()[self.interior]

    @property
    def boundary_points(self):
        return self.lattice_points()[self.boundary_nodes]

    @property
    def cell_volume(self):
        return self.h ** self.n

    @property
    def hash(self):
        return self._hash

    def describe(self):
        """Plain-dict grid spec, enough to rebuild the grid."""
        if self.shape.kind == "box":
            return {"n": self.n, "shape": "box", "center": [float(c) for c in self.shape.center],
                    "half_widths": [float(w) for w in self.shape.half_widths], "h": float(self.h)}
        return {"n": self.n, "shape": "ball", "center": [float(c) for c in self.shape.center],
                "radius": float(self.shape.radius), "h": float(self.h)}

    def scatter(self, u_interior, f_faces=None):
        """Full lattice field from interior values and face Dirichlet data."""
        full = np.zeros(self.n_lattice, dtype=np.result_type(u_interior, f_faces if f_faces is not None else 0.0))
        full[self.interior] = u_interior
        if f_faces is not None:
            full[self.boundary_nodes] = self.trace_matrix @ f_faces
        return full

    def evaluate_on_faces(self, func):
        return func(self.face_centers)

    def evaluate_on_interior(self, func):
        return func(self.interior_points)


def _grid_hash(desc):
    return hashlib.sha256(repr(sorted(desc.items())).encode()).hexdigest()[:16]


def _extrapolating_average(m):
    # (m+1) x m: node values from cell-midpoint values, exact for linear data
    if m == 1:
        return np.ones((2, 1))
    E = np.zeros((m + 1, m))
    E[0, 0], E[0, 1] = 1.5, -0.5
    E[m, m - 1], E[m, m - 2] = 1.5, -0.5
    for j in range(1, m):
        E[j, j - 1] = E[j, j] = 0.5
    return E


def _box_grid(n, box, h):
    c = np.asarray(box.center, dtype=float)
    hw = np.asarray(box.half_widths, dtype=float)
    cells = np.rint(2 * hw / h).astype(int)
    if np.any(np.abs(cells * h - 2 * hw) > 1e-9 * np.maximum(hw, 1.0)) or np.any(cells < 2):
        raise ValueError(f"h={h} must divide the box widths {2 * hw} into at least 2 cells")
    lshape = tuple(int(m) + 1 for m in cells)
    origin = c - hw
    idx = np.indices(lshape).reshape(n, -1).T
    is_int = np.all((idx > 0) & (idx < np.array(lshape) - 1), axis=1)
    interior = np.flatnonzero(is_int)
    boundary_nodes = np.flatnonzero(~is_int)
    bpos = -np.ones(int(np.prod(lshape)), dtype=int)
    bpos[boundary_nodes] = np.arange(len(boundary_nodes))
    strides = np.array([int(np.prod(lshape[d + 1:])) for d in range(n)])

    centers, normals, axis_l, sign_l = [], [], [], []
    trace_rows, trace_cols, trace_vals = [], [], []
    flux_rows, flux_cols, flux_vals = [], [], []
    face0 = 0
    for d in range(n):
        other = [a for a in range(n) if a != d]
        for s in (-1, 1):
            fshape = tuple(int(cells[a]) for a in other)
            n_side = int(np.prod(fshape))
            fidx = np.indices(fshape).reshape(n - 1, -1).T
            fc = np.empty((n_side, n))
            fc[:, d] = c[d] + s * hw[d]
            for k, a in enumerate(other):
                fc[:, a] = origin[a] + h * (fidx[:, k] + 0.5)
            nu = np.zeros((n_side, n))
            nu[:, d] = s
            centers.append(fc)
            normals.append(nu)
            axis_l.append(np.full(n_side, d))
            sign_l.append(np.full(n_side, s))

            # face -> side nodes
            E = np.ones((1, 1))
            for a in other:
                E = np.kron(E, _extrapolating_average(int(cells[a])))
            nshape = tuple(int(cells[a]) + 1 for a in other)
            nidx = np.indices(nshape).reshape(n - 1, -1).T
            full_idx = np.empty((len(nidx), n), dtype=int)
            full_idx[:, d] = 0 if s < 0 else lshape[d] - 1
            for k, a in enumerate(other):
                full_idx[:, a] = nidx[:, k]
            flat_nodes = full_idx @ strides
            Ec = sp.coo_matrix(E)
            trace_rows.append(bpos[flat_nodes[Ec.row]])
            trace_cols.append(face0 + Ec.col)
            trace_vals.append(Ec.data)

            # one-sided second-order normal derivative at nodes, averaged to faces
            step = -s * strides[d]
            corners = list(itertools.product((0, 1), repeat=n - 1))
            w = 1.0 / len(corners) / (2 * h)
            for off in corners:
                cidx = np.empty((n_side, n), dtype=int)
                cidx[:, d] = 0 if s < 0 else lshape[d] - 1
                for k, a in enumerate(other):
                    cidx[:, a] = fidx[:, k] + off[k]
                base = cidx @ strides
                rows = face0 + np.arange(n_side)
                for coef, j in ((3.0, 0), (-4.0, 1), (1.0, 2)):
                    flux_rows.append(rows)
                    flux_cols.append(base + j * step)
                    flux_vals.append(np.full(n_side, coef * w))
            face0 += n_side

    F = face0
    T = sp.coo_matrix((np.concatenate(trace_vals), (np.concatenate(trace_rows), np.concatenate(trace_cols))),
                      shape=(len(boundary_nodes), F)).tocsr()
    # nodes shared by several sides: average the per-side reconstructions
    counts = np.zeros(len(boundary_nodes))
    for rows in trace_rows:
        np.add.at(counts, np.unique(rows), 1.0)
    T = sp.diags(1.0 / np.maximum(counts, 1.0)) @ T
    N = sp.coo_matrix((np.concatenate(flux_vals), (np.concatenate(flux_rows), np.concatenate(flux_cols))),
                      shape=(F, int(np.prod(lshape)))).tocsr()
    centers = np.concatenate(centers)

    # discrete Green flux through the stencil edges boundary node -> interior node
    lat_int = np.zeros(int(np.prod(lshape)), dtype=bool)
    lat_int[interior] = True
    deg = np.zeros(len(boundary_nodes))
    e_rows, e_cols, e_vals = [], [], []
    bidx = np.array(np.unravel_index(boundary_nodes, lshape)).T
    for d in range(n):
        for sgn in (-1, 1):
            nb = bidx.copy()
            nb[:, d] += sgn
            ok = np.all((nb >= 0) & (nb < np.array(lshape)), axis=1)
            flat = np.where(ok, nb @ strides, 0)
            hit = ok & lat_int[flat]
            deg[hit] += 1
            e_rows.append(np.flatnonzero(hit))
            e_cols.append(flat[hit])
    stencil = np.flatnonzero(deg > 0)
    Ts = T[stencil]
    rows = np.concatenate(e_rows)
    Eop = sp.coo_matrix((np.concatenate([np.ones(len(rows)), -np.ones(len(rows))]) * h ** (n - 2),
                         (np.concatenate([rows, rows]), np.concatenate([boundary_nodes[rows], np.concatenate(e_cols)]))),
                        shape=(len(boundary_nodes), int(np.prod(lshape)))).tocsr()
    Eop = Eop[stencil]
    area = h ** (n - 1) * np.asarray(Ts.T @ deg[stencil]).ravel()
    G = (sp.diags(1.0 / area) @ Ts.T @ Eop).tocsr()
    corners = c + hw * np.array(list(itertools.product((-1, 1), repeat=n)))
    R = max(1.0, float(np.max(np.linalg.norm(corners, axis=1))))
    return dict(origin=origin, lattice_shape=lshape, interior=interior, boundary_nodes=boundary_nodes,
                face_centers=centers, face_normals=np.concatenate(normals),
                face_area=area, face_axis=np.concatenate(axis_l),
                face_sign=np.concatenate(sign_l), trace_matrix=T, flux_matrix=N, green_flux_matrix=G, R=R)


def _ball_grid(n, ball, h):
    c = np.asarray(ball.center, dtype=float)
    r = float(ball.radius)
    if not h < r / 4:
        raise ValueError(f"ball grid needs h < radius/4, got h={h}, radius={r}")
    m = int(np.ceil(r / h)) + 1
    lshape = (2 * m + 1,) * n
    origin = c - m * h
    idx = np.indices(lshape).reshape(n, -1).T
    pts = origin + h * idx
    is_int = np.linalg.norm(pts - c, axis=1) < r
    interior = np.flatnonzero(is_int)
    strides = np.array([int(np.prod(lshape[d + 1:])) for d in range(n)])

    centers, normals, area, axis_l, sign_l, inner, outer = [], [], [], [], [], [], []
    for d in range(n):
        for s in (-1, 1):
            nb = interior + s * strides[d]
            out = ~is_int[nb]
            i_nodes, o_nodes = interior[out], nb[out]
            mid = 0.5 * (pts[i_nodes] + pts[o_nodes])
            nu = (mid - c) / np.linalg.norm(mid - c, axis=1, keepdims=True)
            centers.append(mid)
            normals.append(nu)
            area.append(h ** (n - 1) * np.abs(nu[:, d]))
            axis_l.append(np.full(len(mid), d))
            sign_l.append(np.full(len(mid), s))
            inner.append(i_nodes)
            outer.append(o_nodes)
    centers = np.concatenate(centers)
    normals = np.concatenate(normals)
    area = np.concatenate(area)
    axis_a = np.concatenate(axis_l)
    sign_a = np.concatenate(sign_l)
    inner = np.concatenate(inner)
    outer = np.concatenate(outer)
    F = len(area)
    boundary_nodes, bpos = np.unique(outer, return_inverse=True)
    T = sp.coo_matrix((np.ones(F), (bpos, np.arange(F))), shape=(len(boundary_nodes), F)).tocsr()
    T = sp.diags(1.0 / np.asarray(T.sum(axis=1)).ravel()) @ T
    # staircase flux: dS * d_nu u equals the lattice flux h^(n-2) (u_out - u_in)
    w = 1.0 / (h * np.abs(normals[np.arange(F), axis_a]))
    rows = np.concatenate([np.arange(F), np.arange(F)])
    cols = np.concatenate([outer, inner])
    vals = np.concatenate([w, -w])
    N = sp.coo_matrix((vals, (rows, cols)), shape=(F, int(np.prod(lshape)))).tocsr()
    R = max(1.0, float(np.linalg.norm(c) + r), float(np.max(np.linalg.norm(centers, axis=1))))
    return dict(origin=origin, lattice_shape=lshape, interior=interior, boundary_nodes=boundary_nodes,
                face_centers=centers, face_normals=normals, face_area=area, face_axis=axis_a,
                face_sign=sign_a, trace_matrix=T, flux_matrix=N, green_flux_matrix=N, R=R)


def build_grid(n, shape, h):
    """Discretize a box or ball in dimension ``n`` with lattice spacing ``h``.

    >>> g = build_grid(2, Box((0, 0), (0.5, 0.5)), 0.25)
    >>> g.n_interior, g.n_faces
    (9, 16)
    """
    n = check_dimension(n)
    h = float(h)
    if not np.isfinite(h) or h <= 0:
        raise ValueError(f"grid spacing must be positive, got {h}")
    if len(shape.center) != n:
        raise ValueError("shape center has wrong dimension")
    if isinstance(shape, Box):
        if len(shape.half_widths) != n:
            raise ValueError("box half_widths has wrong dimension")
        parts = _box_grid(n, shape, h)
    elif isinstance(shape, Ball):
        parts = _ball_grid(n, shape, h)
    else:
        raise TypeError(f"unknown shape {shape!r}")
    for key in ("face_centers", "face_normals", "face_area", "interior", "boundary_nodes", "origin"):
        parts[key].setflags(write=False)
    grid = DomainGrid(n=n, shape=shape, h=h, **parts)
    object.__setattr__(grid, "_hash", _grid_hash(grid.describe()))
    return grid


def grid_from_spec(spec):
    """Build a grid from the dict produced by :meth:`DomainGrid.describe`."""
    if spec["shape"] == "box":
        shape = Box(tuple(spec["center"]), tuple(spec["half_widths"]))
    elif spec["shape"] == "ball":
        shape = Ball(tuple(spec["center"]), float(spec["radius"]))
    else:
        raise ValueError(f"unknown shape {spec['shape']!r}")
    return build_grid(int(spec["n"]), shape, float(spec["h"]))


def unit_cube(h, n=3):
    return build_grid(n, Box((0.0,) * n, (0.5,) * n), h)


@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    """Faces split by the sign of ``alpha . nu``.

    ``plus`` holds faces with ``alpha . nu > 0`` and ``plus_eps`` those with
    ``alpha . nu > epsilon``; ``minus`` and ``minus_eps`` are their complements.
    """

    grid_hash: str
    alpha: np.ndarray
    epsilon: float
    plus: np.ndarray
    minus: np.ndarray
    plus_eps: np.ndarray
    minus_eps: np.ndarray

    def measure(self, grid, which="plus_eps"):
        return float(grid.face_area[getattr(self, which)].sum())

    def mask(self, n_faces, which="minus_eps"):
        m = np.zeros(n_faces, dtype=bool)
        m[getattr(self, which)] = True
        return m


def partition_boundary(grid, alpha, epsilon):
    alpha = check_unit_vector(alpha, grid.n)
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    dots = grid.face_normals @ alpha
    all_faces = np.arange(grid.n_faces)
    plus = all_faces[dots > 0]
    plus_eps = all_faces[dots > epsilon]
    return BoundaryPartition(
        grid_hash=grid.hash, alpha=alpha, epsilon=epsilon,
        plus=plus, minus=all_faces[dots <= 0],
        plus_eps=plus_eps, minus_eps=all_faces[dots <= epsilon],
    )
