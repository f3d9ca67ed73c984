"""Guidance law: velocity fields from wave fields, and trajectory integration.

The velocity is the phase gradient v = (hbar/m) * d(arg psi)/dx, computed as
the centered difference of Im(log psi): v_i = arg(psi_{i+1} conj(psi_{i-1}))
/ (2 dx). Same stencil order as differencing psi itself, but exact for linear
and quadratic phases (plane waves, spreading Gaussians) and free of |psi|^2
divisions near nodes. Cells where |psi|^2 falls below node_epsilon times the
peak are masked.

While a readout coupling g*A(x)*p_y is active, the continuity equation picks
up an advective flux g*A(x)*|psi|^2 along y, so the pointer velocity is the
phase-gradient term plus g*A(x); in impulsive mode (kinetic frozen) the
phase-gradient terms drop and the drift alone remains. A(x) is evaluated
analytically at the trajectory position: interpolating the staircase off the
grid would blur bin edges.

Trajectories use classical fourth-order one-step integration on velocities
interpolated linearly in space and time. A single trajectory that touches a
masked cell retries with halved steps (up to 8 halvings) before giving up;
the vectorized ensemble integrator freezes masked evaluations instead and
counts them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Configuration, Grid1D, Grid2D, Trajectory, WaveField
from .errors import AllNodes, HitNode, LeftGrid
from .schrodinger import Hamiltonian1D, Hamiltonian2D

NODE_EPSILON = 1e-12


@dataclass(frozen=True)
class VelocityField:
    """Velocity components on a grid, with a near-node mask."""

    grid: Grid1D | Grid2D
    components: tuple[np.ndarray, ...]
    mask: np.ndarray  # True where |psi|^2 is below threshold


def _phase_diff(values: np.ndarray, dx: float, axis: int) -> np.ndarray:
    """Centered difference of arg(psi) along one axis, one-sided at edges."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty(v.shape, dtype=float)
    out[1:-1] = np.angle(v[2:] * np.conj(v[:-2])) / (2.0 * dx)
    out[0] = np.angle(v[1] * np.conj(v[0])) / dx
    out[-1] = np.angle(v[-1] * np.conj(v[-2])) / dx
    return np.moveaxis(out, 0, axis)


def velocity_from_field(f: WaveField, masses=None, node_epsilon: float = NODE_EPSILON) -> VelocityField:
    """Guidance velocity of a field; masked near nodes, zero where masked."""
    rho = f.density()
    peak = rho.max()
    if peak == 0.0:
        raise AllNodes("field vanishes everywhere")
    mask = rho < node_epsilon * peak
    if mask.all():
        raise AllNodes("no cell above the node threshold")
    if f.is_1d:
        masses = masses or (1.0,)
        comps = (_phase_diff(f.values, f.grid.dx, 0) / masses[0],)
    else:
        masses = masses or (1.0, 1.0)
        comps = (
            _phase_diff(f.values, f.grid.x.dx, 0) / masses[0],
            _phase_diff(f.values, f.grid.y.dx, 1) / masses[1],
        )
    comps = tuple(np.where(mask, 0.0, c) for c in comps)
    return VelocityField(f.grid, comps, mask)


def _masses_of(ham) -> tuple[float, ...]:
    if ham is None:
        return ()
    if isinstance(ham, Hamiltonian1D):
        return (ham.mass,)
    return (ham.mass_x, ham.mass_y)


def probability_current(f: WaveField, ham=None, include_drift: bool = True):
    """Probability current components, advective readout flux included."""
    coupling = getattr(ham, "coupling", None)
    impulsive = bool(getattr(ham, "impulsive", False))
    active = include_drift and coupling is not None and coupling.active(f.t)
    rho = f.density()
    if active and impulsive:
        comps = tuple(np.zeros_like(rho) for _ in range(2))
    else:
        vf = velocity_from_field(f, _masses_of(ham) or None)
        comps = vf.components
    j = [rho * c for c in comps]
    if active:
        a = coupling.profile(f.grid.x.points)[:, None]
        j[1] = j[1] + coupling.g * a * rho
    return tuple(j)


def _interp_linear(grid: Grid1D, arrays, mask, xs):
    u = (xs - grid.x_min) / grid.dx
    i = np.clip(np.floor(u).astype(int), 0, grid.n - 2)
    w = u - i
    vals = [(1.0 - w) * a[i] + w * a[i + 1] for a in arrays]
    hit = mask[i] | mask[i + 1]
    return vals, hit


def _interp_bilinear(grid: Grid2D, arrays, mask, xs, ys):
    ux = (xs - grid.x.x_min) / grid.x.dx
    uy = (ys - grid.y.x_min) / grid.y.dx
    i = np.clip(np.floor(ux).astype(int), 0, grid.x.n - 2)
    j = np.clip(np.floor(uy).astype(int), 0, grid.y.n - 2)
    wx = ux - i
    wy = uy - j
    w00 = (1 - wx) * (1 - wy)
    w10 = wx * (1 - wy)
    w01 = (1 - wx) * wy
    w11 = wx * wy
    vals = [w00 * a[i, j] + w10 * a[i + 1, j] + w01 * a[i, j + 1] + w11 * a[i + 1, j + 1]
            for a in arrays]
    hit = mask[i, j] | mask[i + 1, j] | mask[i, j + 1] | mask[i + 1, j + 1]
    return vals, hit


class SnapshotVelocity:
    """Velocity source backed by stored field snapshots.

    Linear interpolation between the two bracketing snapshots in time,
    (bi)linear in space. Velocity grids per snapshot are computed lazily and
    cached. If a Hamiltonian with an active readout coupling is supplied, the
    drift g*A(x) is added along y (and, in impulsive mode, replaces the
    frozen phase-gradient terms inside the window).
    """

    def __init__(self, snapshots, hamiltonian=None, node_epsilon: float = NODE_EPSILON):
        snaps = sorted(snapshots, key=lambda s: s.t)
        if len(snaps) < 1:
            raise ValueError("need at least one snapshot")
        self.snapshots = snaps
        self.times = np.array([s.t for s in snaps])
        self.grid = snaps[0].grid
        self.ham = hamiltonian
        self.node_epsilon = node_epsilon
        self.dim = 1 if snaps[0].is_1d else 2
        self._cache: dict[int, VelocityField] = {}

    def _vf(self, i: int) -> VelocityField:
        if i not in self._cache:
            self._cache[i] = velocity_from_field(
                self.snapshots[i], _masses_of(self.ham) or None, self.node_epsilon
            )
        return self._cache[i]

    def _interp_at(self, i: int, pos: np.ndarray):
        vf = self._vf(i)
        if self.dim == 1:
            vals, hit = _interp_linear(self.grid, vf.components, vf.mask, pos[:, 0])
        else:
            vals, hit = _interp_bilinear(self.grid, vf.components, vf.mask, pos[:, 0], pos[:, 1])
        return np.stack(vals, axis=-1), hit

    def contains(self, pos: np.ndarray) -> np.ndarray:
        if self.dim == 1:
            return self.grid.contains(pos[:, 0])
        return self.grid.contains(pos[:, 0], pos[:, 1])

    def evaluate(self, pos: np.ndarray, t: float):
        """Velocities and node-hit flags for positions (N, dim) at time t."""
        times = self.times
        tol = 1e-9 * max(1.0, abs(times[-1]))
        if t < times[0] - tol or t > times[-1] + tol:
            raise ValueError(f"time {t} outside snapshot range")
        coupling = getattr(self.ham, "coupling", None)
        impulsive = bool(getattr(self.ham, "impulsive", False))
        active = coupling is not None and coupling.active(min(max(t, times[0]), times[-1]))

        if active and impulsive:
            v = np.zeros_like(pos)
            hit = np.zeros(pos.shape[0], dtype=bool)
        else:
            i = int(np.searchsorted(times, t, side="right")) - 1
            i = min(max(i, 0), len(times) - 1)
            if i == len(times) - 1 or abs(times[i] - t) <= tol:
                v, hit = self._interp_at(i, pos)
            else:
                v0, h0 = self._interp_at(i, pos)
                v1, h1 = self._interp_at(i + 1, pos)
                w = (t - times[i]) / (times[i + 1] - times[i])
                v = (1.0 - w) * v0 + w * v1
                hit = h0 | h1
        if active:
            v = v.copy()
            v[:, 1] += coupling.g * coupling.profile(pos[:, 0])
        return v, hit


class CallableVelocity:
    """Velocity source from an analytic function v(positions, t)."""

    def __init__(self, fn, dim: int, grid=None):
        self.fn = fn
        self.dim = dim
        self.grid = grid

    def contains(self, pos: np.ndarray) -> np.ndarray:
        if self.grid is None:
            return np.ones(pos.shape[0], dtype=bool)
        if self.dim == 1:
            return self.grid.contains(pos[:, 0])
        return self.grid.contains(pos[:, 0], pos[:, 1])

    def evaluate(self, pos: np.ndarray, t: float):
        return np.asarray(self.fn(pos, t), dtype=float), np.zeros(pos.shape[0], dtype=bool)


class _NodeTouch(Exception):
    pass


def _rk4_once(history, pos: np.ndarray, t: float, dt: float) -> np.ndarray:
    def vel(p, tt):
        if not history.contains(p).all():
            raise LeftGrid(f"trajectory left the grid near t={tt:.6g}")
        v, hit = history.evaluate(p, tt)
        if hit.any():
            raise _NodeTouch
        return v

    k1 = vel(pos, t)
    k2 = vel(pos + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = vel(pos + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = vel(pos + dt * k3, t + dt)
    return pos + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_refining(history, pos, t, dt, depth):
    try:
        return _rk4_once(history, pos, t, dt)
    except _NodeTouch:
        if depth >= 8:
            raise HitNode(f"node region at t={t:.6g} persists after 8 halvings") from None
        mid = _step_refining(history, pos, t, 0.5 * dt, depth + 1)
        return _step_refining(history, mid, t + 0.5 * dt, 0.5 * dt, depth + 1)


def integrate_trajectory(history, start: Configuration, dt: float, steps: int) -> Trajectory:
    """Integrate one trajectory; uniform samples every dt from start.t."""
    if dt <= 0 or steps < 1:
        raise ValueError("need dt > 0 and steps >= 1")
    pos = np.asarray(start.positions, dtype=float)[None, :]
    if not history.contains(pos).all():
        raise LeftGrid("start lies outside the grid")
    pts = np.empty((steps + 1, pos.shape[1]))
    pts[0] = pos[0]
    for k in range(steps):
        pos = _step_refining(history, pos, start.t + k * dt, dt, 0)
        pts[k + 1] = pos[0]
    times = start.t + np.arange(steps + 1) * dt
    return Trajectory(times, pts)


@dataclass
class EnsembleTrack:
    """Ensemble positions recorded at requested times."""

    times: list[float]
    positions: list[np.ndarray]  # each (N, dim)
    masked_evaluations: int

    def at(self, t: float) -> np.ndarray:
        for tt, p in zip(self.times, self.positions):
            if abs(tt - t) <= 1e-9 * max(1.0, abs(t)):
                return p
        raise KeyError(f"no ensemble record at t={t}")


def integrate_ensemble(history, starts: np.ndarray, t0: float, record_times, dt: float) -> EnsembleTrack:
    """Vectorized lockstep integration of many trajectories.

    No step refinement: a masked velocity evaluates to zero (the particle
    holds still) and is counted, so equilibrium statistics stay auditable.
    """
    pos = np.array(starts, dtype=float)
    if pos.ndim != 2:
        raise ValueError("starts must be (N, dim)")
    if not history.contains(pos).all():
        raise LeftGrid("some starts lie outside the grid")
    masked = 0

    def vel(p, tt):
        nonlocal masked
        v, hit = history.evaluate(p, tt)
        masked += int(hit.sum())
        return v

    times_out: list[float] = []
    pos_out: list[np.ndarray] = []
    t = t0
    for target in sorted(record_times):
        span = target - t
        if span < -1e-12:
            raise ValueError("record times must be ahead of t0 and sorted")
        n_steps = int(round(span / dt)) if span > 1e-12 else 0
        if span > 1e-12 and (n_steps == 0 or abs(span - n_steps * dt) > 1e-6 * dt):
            raise ValueError(f"record time {target} not a whole number of dt steps away")
        for k in range(n_steps):
            tt = t + k * dt
            k1 = vel(pos, tt)
            k2 = vel(pos + 0.5 * dt * k1, tt + 0.5 * dt)
            k3 = vel(pos + 0.5 * dt * k2, tt + 0.5 * dt)
            k4 = vel(pos + dt * k3, tt + dt)
            pos = pos + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not history.contains(pos).all():
                raise LeftGrid(f"ensemble member left the grid near t={tt + dt:.6g}")
        t = target
        times_out.append(t)
        pos_out.append(pos.copy())
    return EnsembleTrack(times_out, pos_out, masked)


@dataclass
class CrossingReport:
    """Pairwise equal-time diagnostics over a batch of trajectories."""

    n_pairs: int
    min_distance: float
    swapped_pairs: tuple[int, ...]  # per coordinate axis


def crossing_check(batch: np.ndarray) -> CrossingReport:
    """Scan a (B, T, dim) batch for order swaps and the closest approach.

    In 1D an order swap between equal-time paths violates uniqueness; in 2D
    per-axis swaps are legal (paths may orbit), so they are reported, not
    judged.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 3:
        raise ValueError("batch must be (B, T, dim)")
    b, _, dim = batch.shape
    min_d = np.inf
    swaps = np.zeros(dim, dtype=int)
    for i in range(b - 1):
        diff = batch[i + 1:] - batch[i]  # (B-i-1, T, dim)
        d = np.sqrt((diff**2).sum(axis=2))
        min_d = min(min_d, float(d.min()))
        for a in range(dim):
            s = np.sign(diff[:, :, a])
            crossed = (s[:, 1:] * s[:, :-1] < 0).any(axis=1)
            swaps[a] += int(crossed.sum())
    return CrossingReport(b * (b - 1) // 2, min_d, tuple(int(x) for x in swaps))


def continuity_defect(f0: WaveField, f1: WaveField, ham=None, margin: int = 16,
                      include_drift: bool = True) -> float:
    """Interior mass balance between two snapshots.

    Compares the change of |psi|^2 mass inside the margin-inset box against
    the net probability flux through the box faces (trapezoid in time).
    Returns the absolute defect; small values certify that the velocity
    field transports density consistently.
    """
    dt = f1.t - f0.t
    if dt <= 0:
        raise ValueError("need f1 later than f0")
    m = margin
    if m < 1:
        raise ValueError("margin must be at least 1")
    j0 = probability_current(f0, ham, include_drift)
    j1 = probability_current(f1, ham, include_drift)
    javg = [0.5 * (a + b) for a, b in zip(j0, j1)]

    # faces sit half a cell outside the summed block, matching the cell sum
    def face_lo(j, axis):
        sl = [slice(m, -m)] * j.ndim
        sl[axis] = slice(m - 1, m + 1)
        return j[tuple(sl)].mean(axis=axis)

    def face_hi(j, axis):
        sl = [slice(m, -m)] * j.ndim
        sl[axis] = slice(-m - 1, -m + 1 if m > 1 else None)
        return j[tuple(sl)].mean(axis=axis)

    rho0, rho1 = f0.density(), f1.density()
    if f0.is_1d:
        dx = f0.grid.dx
        dmass = (rho1[m:-m] - rho0[m:-m]).sum() * dx
        netflux = float(face_hi(javg[0], 0) - face_lo(javg[0], 0))
    else:
        dx, dy = f0.grid.x.dx, f0.grid.y.dx
        dmass = (rho1[m:-m, m:-m] - rho0[m:-m, m:-m]).sum() * dx * dy
        jx, jy = javg
        netflux = (face_hi(jx, 0) - face_lo(jx, 0)).sum() * dy
        netflux += (face_hi(jy, 1) - face_lo(jy, 1)).sum() * dx
    return float(abs(dmass + netflux * dt))
