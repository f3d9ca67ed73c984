"""Shared kinds: units, grids, fields, configurations, trajectories.

Internally everything runs in scaled units with hbar = m = 1. The default
unit system puts the length unit at 1 nm and the mass at the electron mass,
which makes the time unit m*L^2/hbar = 8.638e-15 s and the velocity unit
1.158e5 m/s. All I/O converts explicitly through UnitSystem; nothing inside
the solvers ever sees an SI number.

Grids are uniform and endpoint-inclusive: dx = (x_max - x_min)/(n - 1).
Norms are plain Riemann sums sum(|psi|^2) * cell, which spectral steps
conserve exactly and which converge faster than dx^2 for resolved packets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import UnknownDimension, ZeroNorm

HBAR_SI = 1.054571817e-34  # J s
ELECTRON_MASS_SI = 9.1093837015e-31  # kg


@dataclass(frozen=True)
class UnitSystem:
    """Conversion between SI and the scaled units used internally."""

    length_unit: float = 1e-9  # m
    mass: float = ELECTRON_MASS_SI  # kg
    hbar: float = HBAR_SI  # J s

    @property
    def time_unit(self) -> float:
        return self.mass * self.length_unit**2 / self.hbar

    @property
    def velocity_unit(self) -> float:
        return self.length_unit / self.time_unit

    @property
    def momentum_unit(self) -> float:
        return self.mass * self.velocity_unit

    def _factor(self, dimension: str) -> float:
        try:
            return {
                "length": self.length_unit,
                "time": self.time_unit,
                "velocity": self.velocity_unit,
                "momentum": self.momentum_unit,
            }[dimension]
        except KeyError:
            raise UnknownDimension(f"no conversion for dimension {dimension!r}") from None

    def to_scaled(self, value: float, dimension: str) -> float:
        """SI value -> scaled value."""
        return value / self._factor(dimension)

    def to_si(self, value: float, dimension: str) -> float:
        """Scaled value -> SI value."""
        return value * self._factor(dimension)


DEFAULT_UNITS = UnitSystem()


def convert_si_to_scaled(value: float, dimension: str, units: UnitSystem = DEFAULT_UNITS) -> float:
    """Convert one SI quantity into scaled units."""
    return units.to_scaled(value, dimension)


@dataclass(frozen=True)
class Grid1D:
    """Uniform endpoint-inclusive 1D grid."""

    n: int
    x_min: float
    x_max: float

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(f"grid needs at least 8 points, got {self.n}")
        if not self.x_max > self.x_min:
            raise ValueError("grid extent must have x_max > x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @cached_property
    def points(self) -> np.ndarray:
        p = np.linspace(self.x_min, self.x_max, self.n)
        p.flags.writeable = False
        return p

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the discrete Fourier basis."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)
        k.flags.writeable = False
        return k

    @property
    def spectral_ready(self) -> bool:
        return self.n & (self.n - 1) == 0

    def require_spectral(self):
        if not self.spectral_ready:
            raise ValueError(f"spectral evolution needs a power-of-two grid, got n={self.n}")

    def contains(self, x) -> np.ndarray:
        """Strict-interior membership test (works on scalars and arrays)."""
        return (np.asarray(x) > self.x_min) & (np.asarray(x) < self.x_max)


@dataclass(frozen=True)
class Grid2D:
    """Tensor product of two 1D grids; values are indexed [ix, iy]."""

    x: Grid1D
    y: Grid1D

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x.n, self.y.n)

    @property
    def cell(self) -> float:
        return self.x.dx * self.y.dx

    def contains(self, xs, ys) -> np.ndarray:
        return self.x.contains(xs) & self.y.contains(ys)


def _cell_volume(grid) -> float:
    return grid.dx if isinstance(grid, Grid1D) else grid.cell


@dataclass(frozen=True)
class WaveField:
    """Complex field sampled on a grid at one instant of scaled time."""

    grid: Grid1D | Grid2D
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        expected = (self.grid.n,) if isinstance(self.grid, Grid1D) else self.grid.shape
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != grid shape {expected}")
        if not np.isfinite(self.values).all():
            raise ValueError("field contains non-finite values")
        v = np.ascontiguousarray(self.values, dtype=np.complex128)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def is_1d(self) -> bool:
        return isinstance(self.grid, Grid1D)

    @property
    def cell(self) -> float:
        return _cell_volume(self.grid)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2)) * self.cell

    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq()))


def normalize(f: WaveField) -> WaveField:
    """Rescale a field to unit norm; raises ZeroNorm on an empty field."""
    n = f.norm()
    if not n > 1e-150:
        raise ZeroNorm(f"cannot normalize field with norm {n:.3e}")
    return WaveField(f.grid, f.values / n, f.t)


def inner_product(a: WaveField, b: WaveField) -> complex:
    """Riemann-sum inner product <a|b> on a shared grid."""
    if a.values.shape != b.values.shape:
        raise ValueError("fields live on different grids")
    return complex(np.vdot(a.values, b.values) * a.cell)


def fidelity(a: WaveField, b: WaveField) -> float:
    """|<a|b>|^2 between two normalized fields."""
    return float(abs(inner_product(a, b)) ** 2)


def gaussian_1d(grid: Grid1D, sigma: float, center: float = 0.0,
                momentum: float = 0.0, t: float = 0.0) -> WaveField:
    """Normalized Gaussian packet exp(-(x-x0)^2/(2 sigma^2) + i k x).

    With this width convention the position standard deviation of |psi|^2
    is sigma/sqrt(2).
    """
    x = grid.points
    psi = np.exp(-((x - center) ** 2) / (2.0 * sigma**2) + 1j * momentum * x)
    psi /= (sigma * np.sqrt(np.pi)) ** 0.5
    return WaveField(grid, psi, t)


def product_field(fx: WaveField, fy: WaveField, t: float = 0.0) -> WaveField:
    """Tensor product of two 1D fields on the combined 2D grid."""
    if not (fx.is_1d and fy.is_1d):
        raise ValueError("product_field expects two 1D fields")
    grid = Grid2D(fx.grid, fy.grid)
    return WaveField(grid, np.outer(fx.values, fy.values), t)


@dataclass(frozen=True)
class Configuration:
    """A point in configuration space at a given time."""

    positions: tuple[float, ...]
    t: float = 0.0

    def __post_init__(self):
        if len(self.positions) not in (1, 2):
            raise ValueError("only 1D and 2D configurations are supported")
        if not all(np.isfinite(self.positions)) or not np.isfinite(self.t):
            raise ValueError("configuration must be finite")

    def require_inside(self, grid):
        if isinstance(grid, Grid1D):
            ok = len(self.positions) == 1 and bool(grid.contains(self.positions[0]))
        else:
            ok = len(self.positions) == 2 and bool(
                grid.contains(self.positions[0], self.positions[1])
            )
        if not ok:
            raise ValueError(f"configuration {self.positions} not strictly inside grid")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled path through configuration space."""

    times: np.ndarray
    points: np.ndarray  # shape (steps, dim)

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        p = np.ascontiguousarray(self.points, dtype=float)
        if t.ndim != 1 or p.ndim != 2 or p.shape[0] != t.shape[0]:
            raise ValueError("times and points shapes do not line up")
        if t.shape[0] < 2:
            raise ValueError("trajectory needs at least two samples")
        d = np.diff(t)
        if not (d > 0).all():
            raise ValueError("timestamps must be strictly increasing")
        if np.max(np.abs(d - d[0])) > 1e-12 * max(1.0, abs(t[-1])):
            raise ValueError("timestamps must be uniformly spaced")
        t.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def dim(self) -> int:
        return self.points.shape[1]
