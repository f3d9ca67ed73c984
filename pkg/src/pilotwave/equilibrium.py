"""Equilibrium ensembles and their statistical verification.

Sampling inverts the piecewise-linear CDF built from trapezoid cell masses
of |psi|^2 on the grid: a cell is chosen by its mass and the position is
uniform within the cell. In 2D the x-marginal is sampled first, then y from
the conditional column CDF interpolated linearly between the two bracketing
columns. The same trapezoid construction serves as the reference CDF in the
statistical checks, so sampler and reference agree exactly and the reported
statistics measure sampling noise and dynamics, not interpolation mismatch.

The KS critical value is the asymptotic 1%-level constant 1.63/sqrt(n); the
chi-square cross-check bins by equal reference probability and merges bins
until every one expects at least 5 counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as _chi2_dist

from .conditional import conditional_slice
from .core import Configuration, WaveField
from .errors import MismatchedTimes, TooFewSelected

KS_CRITICAL_1PCT = 1.63  # asymptotic two-sided coefficient at the 1% level


@dataclass(frozen=True)
class EnsembleSpec:
    """How to draw an equilibrium ensemble: count, seed, source field."""

    n: int
    seed: int
    source: WaveField

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one sample")
        if abs(self.source.norm_sq() - 1.0) > 1e-3:
            raise ValueError("source density must integrate to 1")


@dataclass(frozen=True)
class StatReport:
    """One statistical verdict: pass iff statistic < critical."""

    name: str
    statistic: float
    critical: float
    passed: bool
    n: int


def _report(name: str, statistic: float, critical: float, n: int) -> StatReport:
    return StatReport(name, float(statistic), float(critical), statistic < critical, n)


def _cells(rho: np.ndarray, d: float) -> np.ndarray:
    return 0.5 * (rho[1:] + rho[:-1]) * d


def _pick_cells(cells: np.ndarray, u: np.ndarray):
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    uu = u * cum[-1]
    idx = np.clip(np.searchsorted(cum, uu, side="right") - 1, 0, len(cells) - 1)
    width = cells[idx]
    w = np.where(width > 0, (uu - cum[idx]) / np.where(width > 0, width, 1.0), 0.5)
    return idx, np.clip(w, 0.0, 1.0)


def sample_positions(field: WaveField, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n equilibrium positions from |field|^2, shape (n, dim)."""
    rho = field.density()
    if field.is_1d:
        grid = field.grid
        idx, w = _pick_cells(_cells(rho, grid.dx), rng.random(n))
        return (grid.x_min + (idx + w) * grid.dx)[:, None]

    gx, gy = field.grid.x, field.grid.y
    ycells = 0.5 * (rho[:, 1:] + rho[:, :-1]) * gy.dx      # (nx, ny-1)
    col_mass = ycells.sum(axis=1)                          # (nx,)
    xcells = 0.5 * (col_mass[1:] + col_mass[:-1]) * gx.dx
    u1 = rng.random(n)
    u2 = rng.random(n)
    i, wx = _pick_cells(xcells, u1)
    xs = gx.x_min + (i + wx) * gx.dx

    cumy = np.concatenate([np.zeros((gx.n, 1)), np.cumsum(ycells, axis=1)], axis=1)
    ys = np.empty(n)
    for lo in range(0, n, 4096):                           # chunked to bound memory
        hi = min(lo + 4096, n)
        f = (1.0 - wx[lo:hi, None]) * cumy[i[lo:hi]] + wx[lo:hi, None] * cumy[i[lo:hi] + 1]
        target = u2[lo:hi] * f[:, -1]
        j = np.clip((f <= target[:, None]).sum(axis=1) - 1, 0, gy.n - 2)
        rows = np.arange(hi - lo)
        width = f[rows, j + 1] - f[rows, j]
        wy = np.where(width > 0, (target - f[rows, j]) / np.where(width > 0, width, 1.0), 0.5)
        ys[lo:hi] = gy.x_min + (j + np.clip(wy, 0.0, 1.0)) * gy.dx
    return np.stack([xs, ys], axis=1)


def sample_configurations(spec: EnsembleSpec) -> list[Configuration]:
    """Deterministic equilibrium ensemble for a sampling spec."""
    rng = np.random.default_rng(spec.seed)
    pos = sample_positions(spec.source, spec.n, rng)
    t = spec.source.t
    return [Configuration(tuple(row), t) for row in pos]


def marginal_cdf(field: WaveField, axis: int):
    """Piecewise-linear marginal CDF: grid points and node values."""
    rho = field.density()
    if field.is_1d:
        if axis != 0:
            raise ValueError("1D field has only axis 0")
        grid, marg = field.grid, rho
    else:
        grid = (field.grid.x, field.grid.y)[axis]
        other = (field.grid.y, field.grid.x)[axis]
        marg = rho.sum(axis=1 - axis) * other.dx
    cdf = np.concatenate([[0.0], np.cumsum(_cells(marg, grid.dx))])
    return grid.points, cdf / cdf[-1]


def ks_statistic(samples: np.ndarray, points: np.ndarray, cdf: np.ndarray) -> float:
    """Two-sided KS distance of samples from a piecewise-linear CDF."""
    s = np.sort(np.asarray(samples, dtype=float))
    f = np.interp(s, points, cdf)
    n = len(s)
    steps = np.arange(1, n + 1) / n
    return float(max((steps - f).max(), (f - steps + 1.0 / n).max()))


def ks_report(samples, points, cdf, name: str) -> StatReport:
    n = len(samples)
    return _report(name, ks_statistic(samples, points, cdf),
                   KS_CRITICAL_1PCT / np.sqrt(n), n)


def chi_square_report(samples, points, cdf, name: str, level: float = 0.01) -> StatReport:
    """Binned cross-check: equal-probability bins, >= 5 expected per bin."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    k = max(4, min(40, n // 200))
    inner = np.interp(np.linspace(0.0, 1.0, k + 1)[1:-1], cdf, points)
    edges = np.unique(np.concatenate([[points[0]], inner, [points[-1]]]))
    f_at = np.interp(edges, points, cdf)
    f_at[0], f_at[-1] = 0.0, 1.0
    probs = np.diff(f_at)

    merged_probs: list[float] = []
    merged_edges = [edges[0]]
    acc = 0.0
    for p, e in zip(probs, edges[1:]):
        acc += p
        if acc * n >= 5.0 or e == edges[-1]:
            merged_probs.append(acc)
            merged_edges.append(e)
            acc = 0.0
    if len(merged_probs) > 1 and merged_probs[-1] * n < 5.0:
        merged_probs[-2] += merged_probs[-1]
        del merged_probs[-1], merged_edges[-2]
    probs = np.array(merged_probs)
    counts, _ = np.histogram(samples, bins=np.array(merged_edges))
    expected = probs * n
    chi2 = ((counts - expected) ** 2 / expected).sum()
    dof = max(len(probs) - 1, 1)
    return _report(name, chi2, _chi2_dist.ppf(1.0 - level, dof), n)


def _require_same_time(field: WaveField, t: float):
    if abs(field.t - t) > 1e-9 * max(1.0, abs(field.t)):
        raise MismatchedTimes(f"endpoints at t={t} but field at t={field.t}")


def check_equivariance(field: WaveField, endpoints: np.ndarray, t: float) -> tuple[StatReport, ...]:
    """Per-axis KS comparison of transported endpoints with |field(t)|^2."""
    _require_same_time(field, t)
    endpoints = np.asarray(endpoints, dtype=float)
    names = ("x",) if field.is_1d else ("x", "y")
    reports = []
    for axis, name in enumerate(names):
        points, cdf = marginal_cdf(field, axis)
        reports.append(ks_report(endpoints[:, axis], points, cdf,
                                 f"equivariance-{name}@t={t:g}"))
    return tuple(reports)


def check_conditional_probability(joint: WaveField, endpoints: np.ndarray,
                                  y_center: float, window_width: float) -> StatReport:
    """Empirical X of endpoints with pointer inside the window, against the
    conditional slice density at the window center."""
    endpoints = np.asarray(endpoints, dtype=float)
    half = 0.5 * window_width
    sel = endpoints[np.abs(endpoints[:, 1] - y_center) <= half, 0]
    if len(sel) < 200:
        raise TooFewSelected(f"only {len(sel)} endpoints inside the pointer window")
    sl = conditional_slice(joint, y_center)
    points, cdf = marginal_cdf(sl, 0)
    return ks_report(sel, points, cdf, f"conditional-x@y={y_center:g}")
