"""End-to-end acceptance checklist.

One test per headline guarantee of the package, run against the builtin
scenario registry at full scale.  Each test states its tolerance inline;
nothing here is tuned to the solver, the numbers are external commitments.
"""

import math
import os
import time

import numpy as np
import pytest

from pilotwave.classical import (ClassicalState, integrate_hamilton,
                                 position_readout, simultaneous_measurement)
from pilotwave.core import Configuration
from pilotwave.guidance import CallableVelocity, integrate_trajectory
from pilotwave.io import read_manifest, sha256_of
from pilotwave.scenarios import builtin_names, get_builtin, run_scenario

QUANTUM = (
    "position-measurement",
    "fake-measurement",
    "superposition-nonmeasurability",
    "free-gaussian-equivariance",
    "near-delta-sensitivity",
)


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """Every builtin scenario, run once, with bundle output and wall time."""
    root = tmp_path_factory.mktemp("acceptance")
    out = {}
    for name in builtin_names():
        start = time.perf_counter()
        result = run_scenario(get_builtin(name), out_dir=str(root / name))
        out[name] = (result, time.perf_counter() - start)
    return out


def test_unitarity_and_budget_for_every_scenario(runs):
    # ||psi||^2 stays within 1e-8 of 1 end to end, on at most 2000 solver
    # steps, in under a minute per scenario.
    for name in QUANTUM:
        result, wall = runs[name]
        assert result.diagnostics["norm_drift_max"] < 1e-8, name
        assert result.diagnostics["solver_steps"] <= 2000, name
        assert wall < 60.0, f"{name} took {wall:.1f}s"
    # the splitter scenario is the full-size 2D reference case
    assert runs["fake-measurement"][0].evolution.final.grid.shape == (512, 512)


def test_classical_inference_exact_and_disturbance_linear():
    start = time.perf_counter()
    rng = np.random.default_rng(20260815)
    for _ in range(100):
        x0 = rng.uniform(0.5, 5.0) * rng.choice([-1.0, 1.0])
        p_x0 = rng.uniform(0.5, 5.0) * rng.choice([-1.0, 1.0])
        g = rng.uniform(0.5, 2.0)
        h = rng.uniform(0.5, 2.0)
        t_f = rng.uniform(0.5, 1.5)
        state = ClassicalState(x0, p_x0, 0.0, 0.0, z=0.0, p_z=0.0)
        got = simultaneous_measurement(state, g, h, t_f, dt=t_f / 100)
        assert abs(got.x0 - x0) <= 1e-8 * abs(x0)
        assert abs(got.p_x0 - p_x0) <= 1e-8 * abs(p_x0)

    # a pointer that is not at rest kicks the object; the kick must vanish
    # linearly with the pointer momentum
    def momentum_kick(eps: float) -> float:
        states = integrate_hamilton(ClassicalState(1.0, 0.5, 0.0, eps),
                                    position_readout(1.0), t_f=1.0, dt=1e-2)
        return abs(states[-1].p_x - 0.5)

    ratio = momentum_kick(2e-3) / momentum_kick(1e-3)
    assert abs(ratio - 2.0) <= 0.05 * 2.0
    assert time.perf_counter() - start < 1.0


def test_free_packet_width_trajectories_and_convergence(runs):
    result, _ = runs["free-gaussian-equivariance"]
    cfg = get_builtin("free-gaussian-equivariance")
    sigma = cfg.initial.components[0][0]
    t_f = cfg.trajectory.t_final
    scale = math.sqrt(1.0 + (t_f / sigma**2) ** 2)

    # density width follows the analytic spreading law to 1e-4 relative
    final = result.evolution.final
    x = final.grid.points
    rho = final.density()
    mean = float(np.sum(x * rho) * final.grid.dx)
    width = float(np.sqrt(np.sum((x - mean) ** 2 * rho) * final.grid.dx))
    expected = (sigma / math.sqrt(2.0)) * scale
    assert abs(width - expected) <= 1e-4 * expected

    # the highlighted trajectory rides the scaling map X(t) = X(0) * s(t)
    x_start = cfg.trajectory.x_start
    endpoint = float(result.trajectory.points[-1, 0])
    assert abs(endpoint - x_start * scale) <= 1e-3 * abs(x_start * scale)

    # fourth-order integrator: halving dt cuts the endpoint error >= 8x
    field = CallableVelocity(lambda pos, t: pos * t / (sigma**4 + t**2), dim=1)
    exact = x_start * scale

    def endpoint_error(steps: int) -> float:
        traj = integrate_trajectory(field, Configuration((x_start,), 0.0),
                                    dt=t_f / steps, steps=steps)
        return abs(float(traj.points[-1, 0]) - exact)

    assert endpoint_error(8) / endpoint_error(16) >= 8.0


def test_sampled_ensembles_track_the_density(runs):
    # 1e4 draws from |psi(0)|^2, transported by the guidance flow, agree
    # with |psi(t)|^2 marginals at three later times: KS below 1.63/sqrt(n)
    total_wall = 0.0
    for name in ("free-gaussian-equivariance", "position-measurement"):
        result, wall = runs[name]
        total_wall += wall
        ks = [r for r in result.reports if r.name.startswith("equivariance-")]
        times = {r.name.split("@t=")[1] for r in ks}
        assert len(times) == 3, name
        for r in ks:
            assert r.n == 10000, r.name
            assert r.statistic < 1.63 / math.sqrt(r.n), r.name
            assert r.passed, r.name
        # independent binned cross-check at the same times
        chi = [r for r in result.reports if r.name.startswith("chi2-")]
        assert chi and all(r.passed for r in chi), name
    assert total_wall < 300.0


def test_position_measurement_forms_faithful_channels(runs):
    result, _ = runs["position-measurement"]
    cfg = get_builtin("position-measurement")
    channels = result.channels
    assert len(channels) >= 3

    # pointer channel weights reproduce the initial Gaussian's mass in each
    # staircase cell to 0.02 absolute
    sigma_x = cfg.initial.components[0][0]
    mu = cfg.initial.components[0][1]
    delta = cfg.interaction.delta
    kick = cfg.interaction.g * cfg.interaction.t_off
    sd = sigma_x / math.sqrt(2.0)

    def cell_mass(p: int) -> float:
        lo = (delta * p - mu) / (sd * math.sqrt(2.0))
        hi = (delta * (p + 1) - mu) / (sd * math.sqrt(2.0))
        return 0.5 * (math.erf(hi) - math.erf(lo))

    for ch in channels:
        p = round((ch.centroid / kick - 1.0) / 2.0)
        assert abs(ch.weight - cell_mass(p)) < 0.02, f"cell {p}"

    # channels are disjoint bands on the pointer axis
    for a, b in zip(channels, channels[1:]):
        assert a.y_hi < b.y_lo

    # the highlighted trajectory starts in cell p=1 and its pointer lands
    # in that cell's channel
    end = result.trajectory.points[-1]
    assert delta <= end[0] < 2.0 * delta
    target = 3.0 * kick  # cell p=1 reads out at (2p+1) * kick
    widths = [ch.y_hi - ch.y_lo for ch in channels]
    assert abs(end[1] - target) <= max(widths)

    # conditioning on the pointer collapses the slice: low overlap with the
    # initial x-profile
    assert result.diagnostics["final_slice_fidelity"] < 0.5


def test_fake_measurement_reveals_nothing(runs):
    result, _ = runs["fake-measurement"]
    # x-marginal untouched by the pointer split
    assert result.diagnostics["x_marginal_l1"] < 1e-3
    # conditioning on any pointer channel returns the initial x-statistics
    vs_initial = [r for r in result.reports
                  if r.name.startswith("channel-x-vs-initial")]
    assert len(vs_initial) == len(result.channels) == 3
    for r in vs_initial:
        assert r.n >= 200, r.name
        assert r.passed, r.name


def test_superposition_branches_but_never_blends(runs):
    result, _ = runs["superposition-nonmeasurability"]
    # evolving the branches separately and summing matches the joint run
    assert result.diagnostics["linearity_max_diff"] < 1e-9

    # over 1e4 samples each branch fires half the time
    freqs = result.diagnostics["channel_frequencies"]
    assert len(freqs) == 2
    for f in freqs:
        assert abs(f - 0.5) <= 0.02

    # the pointer only ever reports one of the two branch values: every
    # endpoint sits closer to a channel centroid than half the gap
    assert len(result.channels) == 2
    centroids = sorted(ch.centroid for ch in result.channels)
    gap = centroids[1] - centroids[0]
    assert result.diagnostics["pointer_max_centroid_distance"] < 0.5 * gap


def test_conditional_statistics_survive_selection(runs):
    # selection windows are sigma_y / 4 wide and every selection keeps at
    # least 200 samples; the conditioned x-samples pass KS at 1%
    for name in ("position-measurement", "fake-measurement"):
        result, _ = runs[name]
        cfg = get_builtin(name)
        assert cfg.sampling.window == pytest.approx(cfg.initial.sigma_y / 4.0)
        conds = [r for r in result.reports
                 if r.name.startswith("conditional-x@")]
        assert len(conds) >= 3, name
        for r in conds:
            assert r.n >= 200, r.name
            assert r.passed, r.name
    # the t=0 product state is among the checked cases
    pm = runs["position-measurement"][0]
    assert any(r.name == "conditional-x@y=0" for r in pm.reports)


def test_identical_seeds_reproduce_bundles_bit_for_bit(tmp_path):
    cfg = get_builtin("free-gaussian-equivariance")
    first = run_scenario(cfg, out_dir=str(tmp_path / "first"))
    second = run_scenario(cfg, out_dir=str(tmp_path / "second"))
    a = read_manifest(first.bundle_dir)
    b = read_manifest(second.bundle_dir)
    assert a["files"] == b["files"]
    assert (sha256_of(os.path.join(first.bundle_dir, "manifest.json"))
            == sha256_of(os.path.join(second.bundle_dir, "manifest.json")))
