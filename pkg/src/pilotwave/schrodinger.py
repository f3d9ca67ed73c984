"""Schrodinger evolution: split-operator and Crank-Nicolson steppers.

The split stepper advances exp(-i H dt) factor by factor (Strang ordering,
second order): half potential, half x-kinetic, one full mid factor, and back.
With the pointer coupling g*A(x)*p_y the mid factor acts in the mixed
(x, k_y) representation, where it is the exact translation phase
exp(-i g A(x) k_y dt): each x-column of the field is rigidly displaced along
y at speed g*A(x). Impulsive mode freezes both kinetic terms while the
interaction window is open, the regime where the displacement readout is
exact. Every factor is a pure phase, so the Riemann norm is conserved to
roundoff.

Crank-Nicolson uses the Cayley form (1 + i dt H/2) psi' = (1 - i dt H/2) psi
with three-point stencils and Dirichlet edges, swept per axis in 2D; each
sweep is exactly unitary in exact arithmetic. The interaction term enters the
y-sweep as the centered-difference momentum, kept Hermitian.

Interaction windows must open and close on step boundaries; a window edge
inside a step would silently blur the coupling duration, so it is an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Grid1D, Grid2D, WaveField
from .errors import BoundaryMassExceeded, NonFinite, NonUnitaryStep, ZeroDuration

BOUNDARY_BAND = 5  # cells on each edge counted as "at the boundary"
BOUNDARY_ABORT = 1e-6
STEP_NORM_TOL = 1e-6


def staircase_profile(x, delta: float):
    """Odd-integer readout profile 2*floor(x/delta) + 1.

    Constant on bins [p*delta, (p+1)*delta); the bin index p is read off the
    pointer displacement. As delta -> 0, (delta/2)*profile approaches x.
    """
    if delta <= 0:
        raise ValueError("staircase bin width must be positive")
    return 2.0 * np.floor(np.asarray(x, dtype=float) / delta) + 1.0


@dataclass(frozen=True)
class StaircaseCoupling:
    """Pointer readout term g * A(x) * p_y, active on [t_on, t_off]."""

    g: float
    delta: float
    t_on: float
    t_off: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("staircase bin width must be positive")
        if not self.t_off > self.t_on:
            raise ZeroDuration("interaction window has zero length")

    def profile(self, x):
        return staircase_profile(x, self.delta)

    def active(self, t: float) -> bool:
        return self.t_on <= t <= self.t_off


@dataclass(frozen=True)
class Hamiltonian1D:
    mass: float = 1.0
    potential: np.ndarray | None = None


@dataclass(frozen=True)
class Hamiltonian2D:
    mass_x: float = 1.0
    mass_y: float = 1.0
    potential: np.ndarray | None = None
    coupling: StaircaseCoupling | None = None
    impulsive: bool = False


@dataclass(frozen=True)
class EvolutionParams:
    dt: float
    steps: int
    method: str = "split"  # or "cn"
    snapshot_stride: int = 0
    record_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.method not in ("split", "cn"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.dt < 0 or self.steps < 0:
            raise ValueError("dt and steps must be non-negative")
        if self.dt * self.steps == 0:
            raise ZeroDuration("evolution covers zero time")


@dataclass
class EvolutionResult:
    snapshots: list[WaveField]
    norm_drift_max: float
    boundary_mass_max: float

    @property
    def final(self) -> WaveField:
        return self.snapshots[-1]

    def at_time(self, t: float) -> WaveField:
        for s in self.snapshots:
            if abs(s.t - t) <= 1e-9 * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot recorded at t={t}")


def _window_covers(coupling, t0, t1, tol):
    """True if [t0, t1] lies in the interaction window, False if outside."""
    if coupling is None:
        return False
    if coupling.t_on - tol <= t0 and t1 <= coupling.t_off + tol:
        return True
    if t1 <= coupling.t_on + tol or t0 >= coupling.t_off - tol:
        return False
    raise ValueError("interaction window edges must land on step boundaries")


class _SplitStepper1D:
    def __init__(self, grid: Grid1D, ham: Hamiltonian1D, dt: float):
        grid.require_spectral()
        k = grid.wavenumbers
        self.exp_t = np.exp(-1j * dt * k**2 / (2.0 * ham.mass))
        self.exp_v_half = None
        if ham.potential is not None:
            self.exp_v_half = np.exp(-0.5j * dt * ham.potential)

    def step(self, psi, t0):
        if self.exp_v_half is not None:
            psi = psi * self.exp_v_half
        psi = np.fft.ifft(self.exp_t * np.fft.fft(psi))
        if self.exp_v_half is not None:
            psi = psi * self.exp_v_half
        return psi


class _SplitStepper2D:
    def __init__(self, grid: Grid2D, ham: Hamiltonian2D, dt: float):
        grid.x.require_spectral()
        grid.y.require_spectral()
        self.dt = dt
        kx = grid.x.wavenumbers[:, None]
        ky = grid.y.wavenumbers[None, :]
        self.exp_tx_half = np.exp(-0.5j * dt * kx**2 / (2.0 * ham.mass_x))
        self.exp_ty = np.exp(-1j * dt * ky**2 / (2.0 * ham.mass_y))
        self.exp_v_half = None
        if ham.potential is not None:
            self.exp_v_half = np.exp(-0.5j * dt * ham.potential)
        self.coupling = ham.coupling
        self.impulsive = ham.impulsive
        if ham.coupling is not None:
            a = ham.coupling.profile(grid.x.points)[:, None]
            phase = ham.coupling.g * a * ky
            self.exp_c = np.exp(-1j * dt * phase)
            self.exp_ty_c = self.exp_ty * self.exp_c
        self.tol = 1e-9 * max(dt, 1.0)

    def step(self, psi, t0):
        active = _window_covers(self.coupling, t0, t0 + self.dt, self.tol)
        if self.exp_v_half is not None:
            psi = psi * self.exp_v_half
        if active and self.impulsive:
            # kinetic frozen: the coupling factor alone, exact at any dt
            psi = np.fft.ifft(self.exp_c * np.fft.fft(psi, axis=1), axis=1)
        else:
            psi = np.fft.ifft(self.exp_tx_half * np.fft.fft(psi, axis=0), axis=0)
            mid = self.exp_ty_c if active else self.exp_ty
            psi = np.fft.ifft(mid * np.fft.fft(psi, axis=1), axis=1)
            psi = np.fft.ifft(self.exp_tx_half * np.fft.fft(psi, axis=0), axis=0)
        if self.exp_v_half is not None:
            psi = psi * self.exp_v_half
        return psi


def solve_tridiagonal(lower, diag, upper, rhs):
    """Thomas elimination along the last axis, vectorized over the rest.

    No pivoting: the Cayley systems this backs are diagonally dominant.
    lower[..., 0] and upper[..., -1] are ignored.
    """
    n = rhs.shape[-1]
    lower, diag, upper = np.broadcast_arrays(lower, diag, upper)
    lower = np.broadcast_to(lower, rhs.shape)
    diag = np.broadcast_to(diag, rhs.shape)
    upper = np.broadcast_to(upper, rhs.shape)
    cp = np.empty_like(rhs)
    dp = np.empty_like(rhs)
    cp[..., 0] = upper[..., 0] / diag[..., 0]
    dp[..., 0] = rhs[..., 0] / diag[..., 0]
    for j in range(1, n):
        denom = diag[..., j] - lower[..., j] * cp[..., j - 1]
        cp[..., j] = upper[..., j] / denom
        dp[..., j] = (rhs[..., j] - lower[..., j] * dp[..., j - 1]) / denom
    out = np.empty_like(rhs)
    out[..., -1] = dp[..., -1]
    for j in range(n - 2, -1, -1):
        out[..., j] = dp[..., j] - cp[..., j] * out[..., j + 1]
    return out


def _trimul(lower, diag, upper, x):
    """Tridiagonal matrix times x along the last axis."""
    y = diag * x
    y[..., 1:] += lower[..., 1:] * x[..., :-1]
    y[..., :-1] += upper[..., :-1] * x[..., 1:]
    return y


class _CayleySweep:
    """One unitary Cayley factor for a tridiagonal Hermitian H over dt."""

    def __init__(self, h_lower, h_diag, h_upper, dt):
        a = 0.5j * dt
        self.p_lower = a * h_lower
        self.p_diag = 1.0 + a * h_diag
        self.p_upper = a * h_upper
        self.m_lower = -a * h_lower
        self.m_diag = 1.0 - a * h_diag
        self.m_upper = -a * h_upper

    def apply(self, psi):
        rhs = _trimul(self.m_lower, self.m_diag, self.m_upper, psi)
        return solve_tridiagonal(self.p_lower, self.p_diag, self.p_upper, rhs)


def _kinetic_tridiag(n, dx, mass):
    k = 1.0 / (mass * dx * dx)
    h_diag = np.full(n, k, dtype=complex)
    h_off = np.full(n, -0.5 * k, dtype=complex)
    return h_off, h_diag, h_off.copy()


class _CNStepper1D:
    def __init__(self, grid: Grid1D, ham: Hamiltonian1D, dt: float):
        lo, di, up = _kinetic_tridiag(grid.n, grid.dx, ham.mass)
        if ham.potential is not None:
            di = di + ham.potential
        self.sweep = _CayleySweep(lo, di, up, dt)

    def step(self, psi, t0):
        return self.sweep.apply(psi)


class _CNStepper2D:
    """Strang-split Cayley sweeps: half x, full y (with coupling), half x."""

    def __init__(self, grid: Grid2D, ham: Hamiltonian2D, dt: float):
        self.dt = dt
        self.coupling = ham.coupling
        self.impulsive = ham.impulsive
        self.tol = 1e-9 * max(dt, 1.0)
        nx, ny = grid.shape

        lo, di, up = _kinetic_tridiag(nx, grid.x.dx, ham.mass_x)
        self.sweep_x_half = _CayleySweep(lo, di, up, 0.5 * dt)

        lo_y, di_y, up_y = _kinetic_tridiag(ny, grid.y.dx, ham.mass_y)
        pot = np.zeros((nx, ny), dtype=complex)
        if ham.potential is not None:
            pot = pot + ham.potential
        self.sweep_y = _CayleySweep(
            np.broadcast_to(lo_y, (nx, ny)),
            di_y[None, :] + pot,
            np.broadcast_to(up_y, (nx, ny)),
            dt,
        )
        if ham.coupling is not None:
            # centered-difference p_y, kept Hermitian: +/- i g A / (2 dy)
            a = ham.coupling.profile(grid.x.points)[:, None]
            c = ham.coupling.g * a / (2.0 * grid.y.dx)
            up_c = np.broadcast_to(up_y, (nx, ny)) - 1j * c
            lo_c = np.broadcast_to(lo_y, (nx, ny)) + 1j * c
            self.sweep_y_c = _CayleySweep(lo_c, di_y[None, :] + pot, up_c, dt)
            zero = np.zeros(ny, dtype=complex)
            self.sweep_c = _CayleySweep(
                np.broadcast_to(zero, (nx, ny)) + 1j * c,
                np.broadcast_to(zero, (nx, ny)) + pot,
                np.broadcast_to(zero, (nx, ny)) - 1j * c,
                dt,
            )

    def step(self, psi, t0):
        active = _window_covers(self.coupling, t0, t0 + self.dt, self.tol)
        if active and self.impulsive:
            return self.sweep_c.apply(psi)
        psi = self.sweep_x_half.apply(psi.T).T
        sweep = self.sweep_y_c if active else self.sweep_y
        psi = sweep.apply(psi)
        psi = self.sweep_x_half.apply(psi.T).T
        return psi


def _make_stepper(grid, ham, dt, method):
    if isinstance(grid, Grid1D):
        if not isinstance(ham, Hamiltonian1D):
            raise ValueError("1D field needs a Hamiltonian1D")
        cls = _SplitStepper1D if method == "split" else _CNStepper1D
    else:
        if not isinstance(ham, Hamiltonian2D):
            raise ValueError("2D field needs a Hamiltonian2D")
        cls = _SplitStepper2D if method == "split" else _CNStepper2D
    return cls(grid, ham, dt)


def split_step(f: WaveField, ham, dt: float) -> WaveField:
    """One split-operator step; negative dt runs the exact adjoint."""
    stepper = _make_stepper(f.grid, ham, dt, "split")
    return WaveField(f.grid, stepper.step(f.values, f.t), f.t + dt)


def cn_step(f: WaveField, ham, dt: float) -> WaveField:
    """One Crank-Nicolson step; negative dt runs the exact adjoint."""
    stepper = _make_stepper(f.grid, ham, dt, "cn")
    return WaveField(f.grid, stepper.step(f.values, f.t), f.t + dt)


def boundary_band_mass(f: WaveField) -> float:
    """|psi|^2 mass inside the outermost BOUNDARY_BAND cells."""
    rho = f.density()
    b = BOUNDARY_BAND
    if f.is_1d:
        return float(rho[:b].sum() + rho[-b:].sum()) * f.cell
    edge = rho[:b, :].sum() + rho[-b:, :].sum()
    edge += rho[b:-b, :b].sum() + rho[b:-b, -b:].sum()
    return float(edge) * f.cell


def evolve(f: WaveField, ham, params: EvolutionParams) -> EvolutionResult:
    """March a field through params.steps steps with guard rails.

    Records snapshots at t0, at params.record_times (which must land on step
    boundaries), at every snapshot_stride-th step if set, and at the end.
    Aborts with BoundaryMassExceeded once the edge band holds more than 1e-6
    of the mass, and with NonUnitaryStep if a single step moves the norm by
    more than 1e-6.
    """
    dt, steps = params.dt, params.steps
    stepper = _make_stepper(f.grid, ham, dt, params.method)

    record_steps = {0, steps}
    if params.snapshot_stride > 0:
        record_steps.update(range(0, steps + 1, params.snapshot_stride))
    for tr in params.record_times:
        s = (tr - f.t) / dt
        if abs(s - round(s)) > 1e-6:
            raise ValueError(f"record time {tr} does not land on a step boundary")
        record_steps.add(int(round(s)))

    psi = f.values.copy()
    norm0 = f.norm_sq()
    prev = norm0
    drift_max = 0.0
    bmass = boundary_band_mass(f)
    if bmass > BOUNDARY_ABORT:
        raise BoundaryMassExceeded(f"boundary band holds {bmass:.3e} at t0")
    bmass_max = bmass
    snapshots = [f]
    cell = f.cell

    for step in range(1, steps + 1):
        t0 = f.t + (step - 1) * dt
        psi = stepper.step(psi, t0)
        ns = float(np.sum(np.abs(psi) ** 2)) * cell
        if not np.isfinite(ns):
            raise NonFinite(f"norm became non-finite at step {step}")
        if abs(ns - prev) > STEP_NORM_TOL * norm0:
            raise NonUnitaryStep(f"step {step} moved norm^2 by {abs(ns - prev):.3e}")
        prev = ns
        drift_max = max(drift_max, abs(ns - norm0) / norm0)
        snap = WaveField(f.grid, psi, f.t + step * dt)
        bm = boundary_band_mass(snap)
        bmass_max = max(bmass_max, bm)
        if bm > BOUNDARY_ABORT:
            raise BoundaryMassExceeded(f"boundary band holds {bm:.3e} at step {step}")
        if step in record_steps:
            snapshots.append(snap)

    return EvolutionResult(snapshots, drift_max, bmass_max)


def apply_y_splitter(f: WaveField, displacements, weights) -> WaveField:
    """x-independent pointer splitter: psi -> sum_k sqrt(w_k) psi(x, y - d_k).

    Spectral translation, so displaced copies wrap at the grid edge; callers
    keep displacements well inside the extent. Unitary only when the
    displaced copies do not overlap; the caller checks the returned norm.
    """
    if f.is_1d:
        raise ValueError("splitter acts on a 2D field")
    displacements = np.asarray(displacements, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if displacements.shape != weights.shape or displacements.ndim != 1:
        raise ValueError("displacements and weights must be 1D and equal length")
    if (weights <= 0).any():
        raise ValueError("weights must be positive")
    f.grid.y.require_spectral()
    ky = f.grid.y.wavenumbers[None, :]
    mixer = np.zeros_like(ky, dtype=complex)
    for d, w in zip(displacements, weights):
        mixer = mixer + np.sqrt(w) * np.exp(-1j * ky * d)
    out = np.fft.ifft(mixer * np.fft.fft(f.values, axis=1), axis=1)
    return WaveField(f.grid, out, f.t)
