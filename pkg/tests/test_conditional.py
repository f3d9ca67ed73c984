"""Conditional slices, channel detection, and the coupling residual."""

import numpy as np
import pytest

from pilotwave.conditional import (
    Channel,
    conditional_residual,
    conditional_slice,
    detect_channels,
    effective_exists,
)
from pilotwave.core import Grid1D, Grid2D, WaveField, fidelity, gaussian_1d, product_field
from pilotwave.errors import HitNode, MismatchedTimes, NoChannels, ZeroNorm
from pilotwave.guidance import velocity_from_field
from pilotwave.schrodinger import (
    EvolutionParams,
    Hamiltonian2D,
    StaircaseCoupling,
    evolve,
)

G_SCALED = 0.86379927423


def product_gaussians(nx=256, x_ext=30.0, sx=4.0, ny=64, y_ext=12.0, sy=2.0, y0=0.0):
    gx = Grid1D(nx, -x_ext, x_ext)
    gy = Grid1D(ny, -y_ext, y_ext)
    fx = gaussian_1d(gx, sx)
    fy = gaussian_1d(gy, sy, center=y0)
    return fx, fy, product_field(fx, fy)


def two_branch_state(amp2=None, ny=128):
    # x-Gaussian times two well-separated pointer packets at y = +-6
    gx = Grid1D(128, -30.0, 30.0)
    gy = Grid1D(ny, -12.0, 12.0)
    fx = gaussian_1d(gx, 4.0)
    b1 = gaussian_1d(gy, 0.5, center=-6.0).values
    b2 = gaussian_1d(gy, 0.5, center=6.0).values
    w1, w2 = (0.5, 0.5) if amp2 is None else (1.0 - amp2, amp2)
    fy = np.sqrt(w1) * b1 + np.sqrt(w2) * b2
    vals = np.outer(fx.values, fy)
    vals /= np.sqrt((np.abs(vals) ** 2).sum() * gx.dx * gy.dx)
    return WaveField(Grid2D(gx, gy), vals, 0.0)


def test_product_slice_is_the_x_factor():
    fx, _, joint = product_gaussians()
    sl = conditional_slice(joint, 1.3)
    assert sl.y_actual == 1.3
    assert fidelity(sl, fx) > 1.0 - 1e-10


def test_slice_outside_pointer_grid_rejected():
    _, _, joint = product_gaussians()
    with pytest.raises(ValueError):
        conditional_slice(joint, 12.0)


def test_slice_through_pointer_node_has_zero_norm():
    gx = Grid1D(64, -10.0, 10.0)
    gy = Grid1D(65, -10.0, 10.0)  # odd count puts y=0 on the lattice
    y = gy.points
    fy_vals = (y * np.exp(-(y**2) / 4.0)).astype(complex)
    fy_vals /= np.sqrt((np.abs(fy_vals) ** 2).sum() * gy.dx)
    joint = product_field(gaussian_1d(gx, 2.0), WaveField(gy, fy_vals, 0.0))
    with pytest.raises(ZeroNorm):
        conditional_slice(joint, 0.0)


def test_single_channel_for_product_state():
    _, _, joint = product_gaussians()
    channels = detect_channels(joint, threshold=1e-8)
    assert len(channels) == 1
    assert abs(channels[0].weight - 1.0) < 1e-6
    assert abs(channels[0].centroid) < 1e-6
    # default threshold trims more of the tails but stays close
    default = detect_channels(joint)
    assert len(default) == 1
    assert abs(default[0].weight - 1.0) < 1e-4


def test_threshold_bounds_enforced():
    _, _, joint = product_gaussians()
    for bad in (1e-13, 1e-2, 0.5):
        with pytest.raises(ValueError):
            detect_channels(joint, threshold=bad)


def test_two_equal_branches():
    joint = two_branch_state()
    channels = detect_channels(joint)
    assert len(channels) == 2
    for c, expected_centroid in zip(channels, (-6.0, 6.0)):
        assert abs(c.weight - 0.5) < 1e-4
        assert abs(c.centroid - expected_centroid) < joint.grid.y.dx
    assert abs(sum(c.weight for c in channels) - 1.0) < 2e-2
    assert channels[0].y_hi < channels[1].y_lo  # disjoint windows


def test_raising_threshold_never_adds_channels():
    joint = two_branch_state(amp2=0.002)
    low = detect_channels(joint, threshold=1e-4)
    high = detect_channels(joint, threshold=5e-3)
    assert len(low) == 2
    assert len(high) == 1
    assert detect_channels(joint, threshold=1e-4) == low  # idempotent


def test_weights_survive_further_evolution():
    joint = two_branch_state()
    before = detect_channels(joint)
    res = evolve(joint, Hamiltonian2D(), EvolutionParams(dt=0.025, steps=20))
    after = detect_channels(res.final)
    assert len(after) == len(before)
    for b, a in zip(before, after):
        assert abs(a.weight - b.weight) < 1e-3


def test_effective_exists_inside_channel_not_in_gap():
    joint = two_branch_state()
    ok, channel = effective_exists(joint, 6.0)
    assert ok and abs(channel.centroid - 6.0) < joint.grid.y.dx
    ok_gap, none = effective_exists(joint, 0.0)
    assert not ok_gap and none is None
    # slices anywhere inside one window agree
    s1 = conditional_slice(joint, 5.8)
    s2 = conditional_slice(joint, 6.2)
    assert fidelity(s1, s2) > 0.99


def _free_slice_triple():
    # wide environment packet: its local energy scale stays below the
    # residual tolerance, so the product case reads as zero coupling
    gx = Grid1D(512, -120.0, 120.0)
    gy = Grid1D(64, -240.0, 240.0)
    joint = product_field(gaussian_1d(gx, 20.0), gaussian_1d(gy, 40.0))
    res = evolve(joint, Hamiltonian2D(), EvolutionParams(dt=0.05, steps=6, snapshot_stride=1))
    return [conditional_slice(res.snapshots[k], 1.0) for k in (2, 3, 4)], gx


def _free_residual_max():
    slices, gx = _free_slice_triple()
    r = conditional_residual(slices)
    window = np.abs(gx.points) <= 54.0  # central 90% of the support
    return np.nanmax(np.abs(r[window]))


def test_free_product_residual_is_small():
    assert _free_residual_max() < 1e-3


def test_readout_window_residual_is_large():
    gx = Grid1D(128, -20.0, 20.0)
    gy = Grid1D(128, -8.0, 8.0)
    joint = product_field(gaussian_1d(gx, 4.0, center=3.0), gaussian_1d(gy, 0.5))
    coupling = StaircaseCoupling(g=G_SCALED, delta=15.0, t_on=0.0, t_off=0.1)
    ham = Hamiltonian2D(coupling=coupling, impulsive=True)
    res = evolve(joint, ham, EvolutionParams(dt=0.01, steps=10, snapshot_stride=1))
    slices = [conditional_slice(res.snapshots[k], 0.3) for k in (4, 5, 6)]
    r = conditional_residual(slices)
    window = np.abs(gx.points - 3.0) <= 8.0
    mid_readout = np.nanmax(np.abs(r[window]))
    assert mid_readout > 100.0 * _free_residual_max()


def _spreading_gaussian(grid, sigma, t, v0=0.0):
    # exact free solution of the initial exp(-x^2/(2 sigma^2)) packet,
    # with an extra uniform phase for a constant potential v0
    x = grid.points
    z = 1.0 + 1j * t / sigma**2
    vals = np.exp(-(x**2) / (2.0 * sigma**2 * z) - 1j * v0 * t)
    vals /= np.sqrt(z) * np.sqrt(sigma * np.sqrt(np.pi))
    return WaveField(grid, vals, t)


def test_constant_potential_absorbed_when_declared():
    grid = Grid1D(512, -120.0, 120.0)
    v0 = 0.5
    slices = [_spreading_gaussian(grid, 20.0, t, v0) for t in (0.1, 0.15, 0.2)]
    r = conditional_residual(slices, potential=np.full(grid.n, v0))
    window = np.abs(grid.points) <= 54.0
    assert np.nanmax(np.abs(r[window])) < 1e-3


def test_omitted_constant_potential_shows_up_as_real_shift():
    grid = Grid1D(512, -120.0, 120.0)
    v0 = 0.5
    slices = [_spreading_gaussian(grid, 20.0, t, v0) for t in (0.1, 0.15, 0.2)]
    r = conditional_residual(slices)
    window = np.abs(grid.points) <= 54.0
    assert np.nanmax(np.abs(r.real[window] - v0)) < 2e-3
    assert np.nanmax(np.abs(r.imag[window])) < 1e-3


def test_unequal_slice_spacing_rejected():
    grid = Grid1D(512, -120.0, 120.0)
    slices = [_spreading_gaussian(grid, 20.0, t) for t in (0.0, 0.05, 0.12)]
    with pytest.raises(MismatchedTimes):
        conditional_residual(slices)


def test_residual_needs_points_above_node_threshold():
    grid = Grid1D(64, -1.0, 1.0)
    vals = np.full(64, 1e-10, dtype=complex)
    vals[0] = 1.0  # only the excluded boundary point carries mass
    f = [WaveField(grid, vals, t) for t in (0.0, 0.05, 0.1)]
    with pytest.raises(HitNode):
        conditional_residual(f)


def test_slice_velocity_matches_full_field_velocity():
    # x-velocity along one pointer row equals the conditional-slice velocity
    gx = Grid1D(128, -20.0, 20.0)
    gy = Grid1D(128, -8.0, 8.0)
    joint = product_field(gaussian_1d(gx, 4.0, center=3.0, momentum=0.4),
                          gaussian_1d(gy, 0.5))
    coupling = StaircaseCoupling(g=G_SCALED, delta=15.0, t_on=0.0, t_off=0.1)
    ham = Hamiltonian2D(coupling=coupling, impulsive=True)
    final = evolve(joint, ham, EvolutionParams(dt=0.01, steps=10)).final

    j = 70  # an on-lattice pointer row with appreciable mass
    y_row = gy.points[j]
    v2d = velocity_from_field(final, (1.0, 1.0))
    sl = conditional_slice(final, y_row)
    v1d = velocity_from_field(sl)
    okay = ~(v2d.mask[:, j] | v1d.mask)
    okay &= np.abs(gx.points - 3.0) <= 8.0
    scale = np.max(np.abs(v1d.components[0][okay]))
    diff = np.max(np.abs(v2d.components[0][okay, j] - v1d.components[0][okay]))
    assert diff <= 1e-6 * scale
