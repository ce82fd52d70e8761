"""
Flat, typed ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, list values are comma
separated. Unknown keys are rejected. Example::

    grid.h = 0.0625
    omega_grid = 2, 4, 8, 16
    pairs.family = trig
    pairs.wavenumbers = 0, 2, 4, 7, 10, 14, 18, 24
    output_dir = out

Pair files are given as ``pairs.files = a.txt:b.txt; c.txt:d.txt`` (each
entry is a ``q1:q2`` pair of grid-field files).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _pairs(text):
    out = []
    for item in text.split(";"):
        item = item.strip()
        if item:
            a, b = item.split(":")
            out.append((a.strip(), b.strip()))
    return tuple(out)


# key -> (attribute, parser)
SCHEMA = {
    "grid.n": ("n", int),
    "grid.shape": ("shape", str),
    "grid.center": ("center", _floats),
    "grid.half_widths": ("half_widths", _floats),
    "grid.radius": ("radius", float),
    "grid.h": ("h", float),
    "pairs.family": ("family", str),
    "pairs.amplitude": ("amplitude", float),
    "pairs.wavenumbers": ("wavenumbers", _floats),
    "pairs.envelope_width": ("envelope_width", float),
    "pairs.count": ("count", int),
    "pairs.files": ("pair_files", _pairs),
    "omega_grid": ("omega_grid", _floats),
    "alpha": ("alpha", _floats),
    "epsilon": ("epsilon", float),
    "theta": ("theta", float),
    "s": ("s", float),
    "M": ("M", float),
    "lambda0": ("lambda0", float),
    "C2M": ("C2M", float),
    "margin": ("margin", float),
    "c_small": ("c_small", float),
    "C_stab": ("C_stab", float),
    "tol": ("tol", float),
    "norm_method": ("norm_method", str),
    "forward.omega": ("forward_omega", float),
    "forward.potential": ("forward_potential", str),
    "forward.data": ("forward_data", str),
    "cgo.lambdas": ("cgo_lambdas", _floats),
    "cgo.N": ("cgo_N", int),
    "carleman.n_test": ("carleman_n_test", int),
    "fourier.lambda": ("fourier_lambda", float),
    "fourier.xi_max": ("fourier_xi_max", float),
    "fourier.xi_step": ("fourier_xi_step", float),
    "output_dir": ("output_dir", str),
    "cache_dir": ("cache_dir", str),
    "seed": ("seed", int),
    "svg": ("svg", _bool),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    n: int = 3
    shape: str = "box"
    center: tuple = (0.0, 0.0, 0.0)
    half_widths: tuple = (0.5, 0.5, 0.5)
    radius: float = 0.5
    h: float = 0.0625
    family: str = "trig"
    amplitude: float = 2.0
    wavenumbers: tuple = (0.0, 2.0, 4.0, 7.0, 10.0, 14.0, 18.0, 24.0)
    envelope_width: float = 0.2
    count: int = 8
    pair_files: tuple = ()
    omega_grid: tuple = (2.0, 4.0, 8.0, 16.0)
    alpha: tuple = (1.0, 0.0, 0.0)
    epsilon: float = 0.1
    theta: float = 0.5
    s: float = 3.0
    M: float = 1.0
    lambda0: float = 1.0
    C2M: float = 1.0
    margin: float = 0.1
    c_small: float = 1e-3
    C_stab: float = 1.0
    tol: float = 1e-10
    norm_method: str = "power"
    forward_omega: float = 2.0
    forward_potential: str = "zero"
    forward_data: str = "linear"
    cgo_lambdas: tuple = (10.0, 20.0, 40.0, 80.0)
    cgo_N: int = 32
    carleman_n_test: int = 200
    fourier_lambda: float = 3.0
    fourier_xi_max: float = 3.0
    fourier_xi_step: float = 1.0
    output_dir: str = "out"
    cache_dir: str = ""
    seed: int = 0
    svg: bool = True
    source: str = field(default="", repr=False)

    def validate(self):
        if self.shape not in ("box", "ball"):
            raise ConfigError(f"grid.shape must be box or ball, got {self.shape!r}")
        if not self.h > 0:
            raise ConfigError(f"grid.h must be positive, got {self.h}")
        if any(b <= a for a, b in zip(self.omega_grid, self.omega_grid[1:])):
            raise ConfigError("omega_grid must be strictly increasing")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.family not in ("trig", "gaussian", "identical", "files"):
            raise ConfigError(f"unknown pairs.family {self.family!r}")
        base = Path(self.source).parent if self.source else Path(".")
        for a, b in self.pair_files:
            for p in (a, b):
                if not (base / p).exists() and not Path(p).exists():
                    raise ConfigError(f"pair file not found: {p}")
        if self.forward_potential.startswith("file:"):
            p = self.forward_potential[5:]
            if not (base / p).exists() and not Path(p).exists():
                raise ConfigError(f"potential file not found: {p}")
        return self

    def resolve(self, path):
        base = Path(self.source).parent if self.source else Path(".")
        return base / path if (base / path).exists() else Path(path)

    def grid_spec(self):
        spec = {"n": self.n, "shape": self.shape, "center": list(self.center[: self.n]), "h": self.h}
        if self.shape == "box":
            spec["half_widths"] = list(self.half_widths[: self.n])
        else:
            spec["radius"] = self.radius
        return spec

    def as_text(self):
        inv = {attr: key for key, (attr, _) in SCHEMA.items()}
        lines = []
        for f in fields(self):
            if f.name not in inv:
                continue
            v = getattr(self, f.name)
            if f.name == "pair_files":
                v = "; ".join(f"{a}:{b}" for a, b in v)
            elif isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            lines.append(f"{inv[f.name]} = {v}")
        return "\n".join(lines) + "\n"


def parse_config(text, source=""):
    cfg = ExperimentConfig(source=source)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        attr, parser = SCHEMA[key]
        try:
            setattr(cfg, attr, parser(value))
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg.validate()


def load_config(path=None):
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))
