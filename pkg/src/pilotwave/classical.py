"""Classical impulsive readout dynamics, the foil to the wave-mechanical runs.

The interaction Hamiltonian is H = g * A(x, p_x) * p_y, optionally extended
by a second pointer term h * p_x * p_z. Hamilton's equations give

    dx/dt  =  g * (dA/dp_x) * p_y + h * p_z      dy/dt  =  g * A(x, p_x)
    dp_x/dt = -g * (dA/dx)  * p_y                dz/dt  =  h * p_x

and both pointer momenta are strictly conserved. With p_y = p_z = 0 the
object variables are untouched while the pointers accumulate g*A*t and
h*p_x*t, so reading the pointers back recovers the full initial state --
exactly the kind of ideal measurement the quantum scenarios rule out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFinite, ZeroDuration


@dataclass(frozen=True)
class ClassicalState:
    """Object (x, p_x), pointer (y, p_y), optional second pointer (z, p_z)."""

    x: float
    p_x: float
    y: float
    p_y: float
    z: float | None = None
    p_z: float | None = None
    t: float = 0.0

    def __post_init__(self):
        core = [self.x, self.p_x, self.y, self.p_y, self.t]
        if (self.z is None) != (self.p_z is None):
            raise ValueError("second pointer needs both z and p_z")
        if self.z is not None:
            core += [self.z, self.p_z]
        if not all(math.isfinite(v) for v in core):
            raise NonFinite("classical state has non-finite entries")

    @property
    def has_second_pointer(self) -> bool:
        return self.z is not None


@dataclass(frozen=True)
class ClassicalCoupling:
    """Readout coupling g*A(x, p_x)*p_y with declared partial derivatives."""

    g: float
    a: Callable[[float, float], float]
    da_dx: Callable[[float, float], float]
    da_dpx: Callable[[float, float], float]
    h: float = 0.0


def position_readout(g: float, h: float = 0.0) -> ClassicalCoupling:
    """A(x, p_x) = x: the plain position pointer."""
    return ClassicalCoupling(g, lambda x, px: x, lambda x, px: 1.0, lambda x, px: 0.0, h)


def squared_position_readout(g: float) -> ClassicalCoupling:
    """A(x, p_x) = x^2."""
    return ClassicalCoupling(g, lambda x, px: x * x, lambda x, px: 2.0 * x,
                             lambda x, px: 0.0)


def verify_partials(coupling: ClassicalCoupling, points, rel_tol: float = 1e-6,
                    step: float = 1e-6):
    """Check the declared derivatives against central differences."""
    for x, px in points:
        fd_x = (coupling.a(x + step, px) - coupling.a(x - step, px)) / (2.0 * step)
        fd_px = (coupling.a(x, px + step) - coupling.a(x, px - step)) / (2.0 * step)
        for fd, declared in ((fd_x, coupling.da_dx(x, px)), (fd_px, coupling.da_dpx(x, px))):
            scale = max(abs(fd), abs(declared), 1.0)
            if abs(fd - declared) > rel_tol * scale:
                raise ValueError(
                    f"declared partial {declared:g} disagrees with finite difference "
                    f"{fd:g} at (x={x:g}, p_x={px:g})")


def interaction_energy(state: ClassicalState, coupling: ClassicalCoupling) -> float:
    e = coupling.g * coupling.a(state.x, state.p_x) * state.p_y
    if state.has_second_pointer:
        e += coupling.h * state.p_x * state.p_z
    return e


def _validate_span(t_f: float, dt: float) -> int:
    if dt <= 0 or t_f < dt:
        raise ZeroDuration(f"need dt > 0 and t_f >= dt, got t_f={t_f}, dt={dt}")
    steps = int(round(t_f / dt))
    if abs(steps * dt - t_f) > 1e-9 * max(abs(t_f), 1.0):
        raise ValueError(f"t_f={t_f} is not a whole number of dt={dt} steps")
    return steps


def integrate_hamilton(state0: ClassicalState, coupling: ClassicalCoupling,
                       t_f: float, dt: float) -> list[ClassicalState]:
    """Classical 4th-order integration; returns the states at every step."""
    steps = _validate_span(t_f, dt)
    two = state0.has_second_pointer
    if coupling.h != 0.0 and not two:
        raise ValueError("second-pointer coupling h needs a state with (z, p_z)")

    def deriv(s: np.ndarray) -> np.ndarray:
        x, px, py = s[0], s[1], s[3]
        d = np.zeros_like(s)
        d[0] = coupling.g * coupling.da_dpx(x, px) * py
        d[1] = -coupling.g * coupling.da_dx(x, px) * py
        d[2] = coupling.g * coupling.a(x, px)
        if two:
            d[0] += coupling.h * s[5]
            d[4] = coupling.h * px
        return d

    s = np.array([state0.x, state0.p_x, state0.y, state0.p_y]
                 + ([state0.z, state0.p_z] if two else []), dtype=float)

    def pack(vec: np.ndarray, t: float) -> ClassicalState:
        extra = {"z": vec[4], "p_z": vec[5]} if two else {}
        return ClassicalState(vec[0], vec[1], vec[2], vec[3], t=t, **extra)

    out = [pack(s, state0.t)]
    for k in range(steps):
        k1 = deriv(s)
        k2 = deriv(s + 0.5 * dt * k1)
        k3 = deriv(s + 0.5 * dt * k2)
        k4 = deriv(s + dt * k3)
        s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(s).all():
            raise NonFinite(f"classical integration diverged near t={state0.t + k * dt:.6g}")
        out.append(pack(s, state0.t + (k + 1) * dt))
    return out


@dataclass(frozen=True)
class InferredInitial:
    """Initial object state read back from the two pointer displacements."""

    x0: float
    p_x0: float
    final: ClassicalState


def simultaneous_measurement(state0: ClassicalState, g: float, h: float,
                             t_f: float, dt: float) -> InferredInitial:
    """Run the two-pointer coupling and infer (X(0), P_x(0)) from it."""
    if g == 0.0 or h == 0.0:
        raise ZeroDuration("couplings g and h must be nonzero to infer anything")
    if not state0.has_second_pointer:
        raise ValueError("simultaneous measurement needs a state with (z, p_z)")
    _validate_span(t_f, dt)
    traj = integrate_hamilton(state0, position_readout(g, h), t_f, dt)
    final = traj[-1]
    x0 = (final.y - state0.y) / (g * t_f)
    p_x0 = (final.z - state0.z) / (h * t_f)
    return InferredInitial(x0, p_x0, final)
