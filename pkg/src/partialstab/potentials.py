"""
Analytic potential families and the plain-text grid-field file format.

Grid-field file::

    # partialstab grid-field v1
    n 3
    shape box 0 0 0 0.5 0.5 0.5        (or: shape ball cx cy cz radius)
    h 0.0625
    dtype real                          (or complex)
    count 3375
    <interior index> <value> [<imag>]   one line per interior node
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import PotentialField
from .geometry import Ball, Box, build_grid


def smooth_taper(x, half_width=0.5, power=3):
    """``prod (1 - (x_i/hw)^2)^p`` inside the box, 0 outside; C^(p-1) at the boundary."""
    t = np.clip(1.0 - (np.asarray(x) / half_width) ** 2, 0.0, None)
    return np.prod(t ** power, axis=-1)


@dataclass(frozen=True)
class GaussianBump:
    amplitude: float
    center: tuple
    width: float
    taper: bool = True

    def __call__(self, x):
        x = np.atleast_2d(x)
        c = np.asarray(self.center, dtype=float)
        v = self.amplitude * np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * self.width ** 2))
        return v * smooth_taper(x) if self.taper else v


@dataclass(frozen=True)
class TrigMode:
    """``amplitude * cos(k . x + phase)`` under a bump envelope."""

    amplitude: float
    wavevector: tuple
    phase: float = 0.0
    envelope_width: float = 0.2

    def __call__(self, x):
        x = np.atleast_2d(x)
        k = np.asarray(self.wavevector, dtype=float)
        env = np.exp(-np.sum(x ** 2, axis=-1) / (2 * self.envelope_width ** 2)) * smooth_taper(x)
        return self.amplitude * np.cos(x @ k + self.phase) * env


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, x):
        return np.full(np.atleast_2d(x).shape[0], float(self.value))


@dataclass(frozen=True)
class Sum:
    terms: tuple

    def __call__(self, x):
        return sum(t(x) for t in self.terms)


def on_grid(func, grid, s=2, M=np.inf, name=""):
    return PotentialField(grid, np.asarray(func(grid.interior_points), dtype=float), s=s, M=M,
                          name=name or repr(func))


def make_family(name, **params):
    """Build a named analytic family: ``gaussian``, ``trig``, ``constant``."""
    if name == "gaussian":
        return GaussianBump(float(params.get("amplitude", 1.0)), tuple(params.get("center", (0.0, 0.0, 0.0))),
                            float(params.get("width", 0.15)), bool(params.get("taper", True)))
    if name == "trig":
        return TrigMode(float(params.get("amplitude", 1.0)), tuple(params["wavevector"]),
                        float(params.get("phase", 0.0)), float(params.get("envelope_width", 0.2)))
    if name == "constant":
        return Constant(float(params.get("value", 0.0)))
    raise ValueError(f"unknown potential family {name!r}")


def write_grid_field(path, grid, values):
    values = np.asarray(values)
    cplx = np.iscomplexobj(values)
    d = grid.describe()
    if d["shape"] == "box":
        shape_line = "box " + " ".join(repr(float(v)) for v in d["center"] + d["half_widths"])
    else:
        shape_line = "ball " + " ".join(repr(float(v)) for v in d["center"] + [d["radius"]])
    lines = ["# partialstab grid-field v1", f"n {grid.n}", f"shape {shape_line}", f"h {grid.h!r}",
             f"dtype {'complex' if cplx else 'real'}", f"count {len(values)}"]
    for i, v in enumerate(values):
        lines.append(f"{i} {complex(v).real!r} {complex(v).imag!r}" if cplx else f"{i} {float(v)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_grid_field(path):
    """Return ``(grid, values)`` from a grid-field file."""
    header, body = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, *rest = line.split()
            if key.isdigit():
                body.append(rest)
            else:
                header[key] = rest
    n = int(header["n"][0])
    kind, *nums = header["shape"]
    nums = [float(v) for v in nums]
    shape = Box(tuple(nums[:n]), tuple(nums[n:2 * n])) if kind == "box" else Ball(tuple(nums[:n]), nums[n])
    grid = build_grid(n, shape, float(header["h"][0]))
    count = int(header["count"][0])
    if len(body) != count or count != grid.n_interior:
        raise ValueError(f"{path}: expected {grid.n_interior} values, found {len(body)}")
    if header["dtype"][0] == "complex":
        values = np.array([float(a) + 1j * float(b) for a, b in body])
    else:
        values = np.array([float(a[0]) for a in body])
    return grid, values


def read_potential(path, s=2, M=np.inf):
    grid, values = read_grid_field(path)
    return PotentialField(grid, np.real(values), s=s, M=M, name=str(path))
