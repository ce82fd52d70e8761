"""Input validation helpers shared by the estimators and the numerical kernels."""

import numpy as np


class AssumptionViolation(RuntimeError):
    """A spectral admissibility assumption failed or the system is near-singular."""

    def __init__(self, message, reason="assumption", context=None):
        super().__init__(message)
        self.reason = reason
        self.context = dict(context or {})


class ConvergenceError(RuntimeError):
    """An iterative method stopped before reaching its tolerance."""


def check_dimension(n, allowed=(2, 3)):
    if n not in allowed:
        raise ValueError(f"dimension must be one of {allowed}, got {n}")
    return int(n)


def check_unit_vector(v, n=None, tol=1e-12):
    v = np.asarray(v, dtype=float).ravel()
    if n is not None and v.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {v.shape}")
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise ValueError(f"vector {v} is not a unit vector (|v| = {np.linalg.norm(v)!r})")
    return v


def check_same_grid(*objs):
    hashes = {getattr(o, "grid_hash", None) or getattr(getattr(o, "grid", None), "hash", None) for o in objs}
    hashes.discard(None)
    if len(hashes) > 1:
        raise ValueError("objects live on different grids")


def check_interior_field(grid, u, name="u"):
    u = np.asarray(u)
    if u.shape != (grid.n_interior,):
        raise ValueError(f"{name} must have shape ({grid.n_interior},), got {u.shape}")
    return u


def check_face_field(grid, f, name="f"):
    f = np.asarray(f)
    if f.shape[0] != grid.n_faces:
        raise ValueError(f"{name} must have {grid.n_faces} rows, got {f.shape}")
    return f
