"""Conditional wave functions of the x-subsystem and pointer-channel structure.

The conditional wave function is the joint field evaluated on the actual
pointer position, psi(x) = Psi(x, Y, t), renormalized. It always exists; it
obeys the one-particle Schrödinger equation only while the joint state keeps
the subsystem dynamically decoupled. Channels are the operational form of
"macroscopically disjoint supports": contiguous windows of the pointer
marginal separated by gaps below a relative density threshold. When the
pointer sits inside exactly one window, the conditional field doubles as an
effective wave function and slices anywhere in that window agree.

conditional_residual measures how far a slice history deviates from free
one-particle evolution: it evaluates (i hbar dpsi/dt + (hbar^2/2m) psi''
- U psi) / psi pointwise. The result is the sum of the coupling terms the
subsystem equation would need; it vanishes for decoupled dynamics and is
large mid-readout. Slices are renormalized, so the diagnostic is meaningful
when the slice norm is steady over the three input times (true in the
decoupled case; in the coupled case the residual is dominated by the
interaction anyway).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import WaveField
from .errors import HitNode, MismatchedTimes, NoChannels, ZeroNorm
from .guidance import NODE_EPSILON


@dataclass(frozen=True)
class ConditionalSlice(WaveField):
    """A 1D conditional field tagged with the pointer value it came from."""

    y_actual: float = 0.0


def conditional_slice(joint: WaveField, y_actual: float) -> ConditionalSlice:
    """Extract the renormalized x-row of a 2D field at pointer position y."""
    if joint.is_1d:
        raise ValueError("conditional_slice needs a 2D field")
    gy = joint.grid.y
    if not (gy.x_min < y_actual < gy.x_max):
        raise ValueError(f"y={y_actual} outside the pointer grid")
    u = (y_actual - gy.x_min) / gy.dx
    j = min(max(int(np.floor(u)), 0), gy.n - 2)
    w = u - j
    row = (1.0 - w) * joint.values[:, j] + w * joint.values[:, j + 1]
    nrm = np.sqrt((np.abs(row) ** 2).sum() * joint.grid.x.dx)
    if nrm <= 1e-150:
        raise ZeroNorm(f"slice at y={y_actual} has no mass")
    return ConditionalSlice(joint.grid.x, row / nrm, joint.t, y_actual)


@dataclass(frozen=True)
class Channel:
    """One contiguous support window of the pointer marginal."""

    y_lo: float
    y_hi: float
    weight: float
    centroid: float

    def contains(self, y: float) -> bool:
        return self.y_lo <= y <= self.y_hi


def detect_channels(joint: WaveField, threshold: float = 1e-4) -> list[Channel]:
    """Find pointer-support windows: runs of marginal density above threshold.

    Weights are the integrated marginal mass per window; for well-separated
    branches they add up to 1 minus the sub-threshold leakage.
    """
    if not (1e-12 < threshold < 1e-2):
        raise ValueError("threshold must lie in (1e-12, 1e-2)")
    if joint.is_1d:
        raise ValueError("detect_channels needs a 2D field")
    gx, gy = joint.grid.x, joint.grid.y
    marginal = joint.density().sum(axis=0) * gx.dx
    peak = marginal.max()
    if peak <= 0.0:
        raise NoChannels("empty pointer marginal")
    above = np.flatnonzero(marginal > threshold * peak)
    if above.size == 0:
        raise NoChannels("no marginal mass above threshold")
    runs = np.split(above, np.flatnonzero(np.diff(above) > 1) + 1)
    y = gy.points
    channels = []
    for run in runs:
        a, b = run[0], run[-1]
        mass = marginal[a:b + 1].sum() * gy.dx
        centroid = (y[a:b + 1] * marginal[a:b + 1]).sum() * gy.dx / mass
        channels.append(Channel(float(y[a]), float(y[b]), float(mass), float(centroid)))
    return channels


def effective_exists(joint: WaveField, y_actual: float,
                     threshold: float = 1e-4) -> tuple[bool, Channel | None]:
    """Whether the pointer singles out one channel; returns it when so."""
    hits = [c for c in detect_channels(joint, threshold) if c.contains(y_actual)]
    if len(hits) == 1:
        return True, hits[0]
    return False, None


def conditional_residual(slices, potential=None, mass: float = 1.0,
                         hbar: float = 1.0,
                         node_epsilon: float = NODE_EPSILON) -> np.ndarray:
    """Deviation of a slice history from free one-particle evolution.

    Takes three equally spaced 1D fields along one pointer path and returns
    the pointwise complex residual on the middle one. Points below the node
    threshold and the two boundary points are NaN.
    """
    f0, f1, f2 = slices
    if not (f0.is_1d and f1.is_1d and f2.is_1d):
        raise ValueError("residual needs 1D slices")
    if f0.grid != f1.grid or f1.grid != f2.grid:
        raise ValueError("slices must share a grid")
    dt1 = f1.t - f0.t
    dt2 = f2.t - f1.t
    if dt1 <= 0 or abs(dt2 - dt1) > 1e-9 * max(abs(dt1), 1.0):
        raise MismatchedTimes(f"slice times {f0.t}, {f1.t}, {f2.t} are not equally spaced")
    dx = f1.grid.dx
    psi = f1.values
    dpsi_dt = (f2.values - f0.values) / (dt1 + dt2)
    lap = np.full_like(psi, np.nan)
    lap[1:-1] = (psi[2:] - 2.0 * psi[1:-1] + psi[:-2]) / dx**2
    u = 0.0 if potential is None else np.asarray(potential, dtype=float)
    numerator = 1j * hbar * dpsi_dt + (hbar**2 / (2.0 * mass)) * lap - u * psi

    rho = np.abs(psi) ** 2
    ok = rho > node_epsilon * rho.max()
    ok[0] = ok[-1] = False
    if not ok.any():
        raise HitNode("no interior slice point above the node threshold")
    out = np.full(psi.shape, np.nan + 1j * np.nan)
    out[ok] = numerator[ok] / psi[ok]
    return out
