"""Config parsing, the builtin registry, and end-to-end scenario runs."""

import math
import os

import numpy as np
import pytest

from pilotwave.errors import ConfigError, MissingArtifact, ZeroDuration
from pilotwave.io import read_manifest, verify_manifest
from pilotwave.scenarios import (
    BUILTIN_DESCRIPTIONS,
    builtin_names,
    builtin_scenarios,
    get_builtin,
    load_config,
    parse_config,
    run_scenario,
    _probe_record_steps,
)

MINI_1D = """
[grid]
nx = 256
x_min = -40 nm
x_max = 40 nm

[initial]
kind = gaussian
sigma_x = 4 nm
x_0 = 0 nm

[interaction]
kind = none

[sampling]
n = 2000
seed = 3
ens_stride = 2
check_steps = 20, 40

[trajectory]
t_final = 3.45519709692e-14 s
solver_steps = 40
traj_steps = 20
x_start = 2 nm

[output]
snapshot_stride = 10
dump_stride = 20
"""

MINI_2D = """
[grid]
nx = 128
x_min = -30 nm
x_max = 30 nm
ny = 256
y_min = -10 nm
y_max = 26 nm

[initial]
kind = gaussian
sigma_x = 6 nm
x_0 = 0 nm
sigma_y = 0.8 nm
y_0 = 0 nm

[interaction]
kind = splitter
displacements = 0 nm, 8 nm
weights = 1, 1

[sampling]
n = 3000
seed = 5
ens_stride = 1
check_steps = 8
window = 0.3 nm

[trajectory]
t_final = 1.72759854846e-15 s
solver_steps = 8
traj_steps = 8
x_start = 0 nm
y_start = 8 nm

[output]
snapshot_stride = 2
dump_stride = 4
"""


def test_builtin_registry_is_complete():
    names = builtin_names()
    assert names == [
        "position-measurement",
        "fake-measurement",
        "superposition-nonmeasurability",
        "free-gaussian-equivariance",
        "near-delta-sensitivity",
        "classical-impulse",
        "classical-simultaneous",
    ]
    assert set(BUILTIN_DESCRIPTIONS) == set(names)
    for cfg in builtin_scenarios():
        assert cfg.name in names


def test_unknown_builtin_rejected():
    with pytest.raises(ConfigError):
        get_builtin("no-such-scenario")


def test_si_suffixes_scale_correctly():
    cfg = parse_config("mini", MINI_1D)
    assert cfg.grid.x_min == pytest.approx(-40.0, rel=1e-12)
    assert cfg.initial.components[0][0] == pytest.approx(4.0, rel=1e-12)
    assert cfg.trajectory.t_final == pytest.approx(4.0, rel=1e-11)
    pm = get_builtin("position-measurement")
    assert pm.interaction.g == pytest.approx(0.86379927423, rel=1e-9)
    # The pointer kick g*(t_off - t_on) comes out at 6.7 length units.
    kick = pm.interaction.g * (pm.interaction.t_off - pm.interaction.t_on)
    assert kick == pytest.approx(6.7, rel=1e-12)


@pytest.mark.parametrize("mutation,exc", [
    ("nx = 256", ConfigError),                         # key lands in the wrong section
    ("\n[extra]\nfoo = 1", ConfigError),               # unknown section
    ("", None),
])
def test_config_text_tampering(mutation, exc):
    text = MINI_1D + mutation
    if exc is None:
        parse_config("mini", text)
    else:
        with pytest.raises(exc):
            parse_config("mini", text)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config("mini", MINI_1D.replace("x_start = 2 nm",
                                             "x_start = 2 nm\nwhatever = 3"))


def test_bad_unit_rejected():
    with pytest.raises(ConfigError):
        parse_config("mini", MINI_1D.replace("sigma_x = 4 nm", "sigma_x = 4 kg"))
    with pytest.raises(ConfigError):
        parse_config("mini", MINI_1D.replace("sigma_x = 4 nm", "sigma_x = 4"))


def test_staircase_needs_pointer_axis():
    text = MINI_1D.replace(
        "kind = none",
        "kind = staircase\ng = 1e5 m/s\ndelta = 15 nm\nt_on = 0 s\n"
        "t_off = 1e-14 s\nmode = impulsive")
    with pytest.raises(ConfigError, match="pointer"):
        parse_config("mini", text)


def test_staircase_window_must_fit_run():
    pm_text = get_builtin("position-measurement").config_text
    with pytest.raises(ConfigError, match="past t_final"):
        parse_config("pm", pm_text.replace("t_off = 6.7e-14 s", "t_off = 7e-14 s"))


def test_check_steps_validation():
    with pytest.raises(ConfigError, match="ens_stride"):
        parse_config("mini", MINI_1D.replace("check_steps = 20, 40",
                                             "check_steps = 21, 40"))
    with pytest.raises(ConfigError, match="outside"):
        parse_config("mini", MINI_1D.replace("check_steps = 20, 40",
                                             "check_steps = 20, 44"))


def test_dump_stride_needs_recorded_steps():
    with pytest.raises(ConfigError):
        parse_config("mini", MINI_1D.replace("snapshot_stride = 10",
                                             "snapshot_stride = 0"))
    with pytest.raises(ConfigError, match="multiple"):
        parse_config("mini", MINI_1D.replace("dump_stride = 20", "dump_stride = 25"))


def test_superposition_weights_must_sum_to_one():
    text = get_builtin("superposition-nonmeasurability").config_text
    with pytest.raises(ConfigError, match="sum to 1"):
        parse_config("sup", text.replace("weight_2 = 0.5", "weight_2 = 0.6"))


def test_split_method_needs_power_of_two():
    text = MINI_1D.replace("nx = 256", "nx = 250")
    with pytest.raises(ConfigError, match="power of two"):
        parse_config("mini", text)
    parse_config("mini", text.replace("solver_steps = 40",
                                      "solver_steps = 40\nmethod = cn"))


def test_zero_duration_rejected():
    with pytest.raises(ZeroDuration):
        parse_config("mini", MINI_1D.replace("t_final = 3.45519709692e-14 s",
                                             "t_final = 0 s"))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(MissingArtifact):
        load_config(str(tmp_path / "absent.conf"))


def test_classical_needs_pair_and_h():
    text = get_builtin("classical-simultaneous").config_text
    with pytest.raises(ConfigError, match="pair"):
        parse_config("c", text.replace("p_z_0 = 0\n", ""))
    with pytest.raises(ConfigError, match="simultaneous"):
        parse_config("c", text.replace("h = 1", "h = 0"))


def test_with_sampling_overrides():
    cfg = parse_config("mini", MINI_1D)
    assert cfg.with_sampling() is cfg
    over = cfg.with_sampling(seed=11, n=500)
    assert over.sampling.seed == 11 and over.sampling.n == 500
    assert cfg.sampling.seed == 3
    classical = get_builtin("classical-impulse")
    with pytest.raises(ConfigError):
        classical.with_sampling(seed=1)


def test_probe_schedule_shape():
    steps = _probe_record_steps(1600)
    assert steps[0] == 0 and steps[-1] == 1600
    assert 80 in steps and 10 in steps
    assert all(b > a for a, b in zip(steps, steps[1:]))
    # Small runs degrade to every step without crashing.
    assert _probe_record_steps(4) == [0, 1, 2, 3, 4]


def test_classical_impulse_run():
    result = run_scenario(get_builtin("classical-impulse"))
    inf = result.extras["inference"]
    assert inf["position_disturbance"] == 0.0
    assert inf["momentum_disturbance"] == 0.0
    assert inf["x_0_error"] < 1e-8
    assert len(result.classical_states) == 1001
    assert result.diagnostics["pointer_momentum_drift"] == 0.0


def test_classical_simultaneous_run():
    result = run_scenario(get_builtin("classical-simultaneous"))
    inf = result.extras["inference"]
    assert inf["x_0_error"] < 1e-8
    assert inf["p_x_0_error"] < 1e-8


@pytest.fixture(scope="module")
def mini_1d_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mini1d")
    cfg = parse_config("mini-free", MINI_1D)
    return run_scenario(cfg, out_dir=str(out / "bundle")), cfg


def test_mini_free_statistics(mini_1d_run):
    result, _cfg = mini_1d_run
    assert len(result.reports) == 4
    assert all(r.passed for r in result.reports)
    assert sorted(result.endpoints) == [0, 20, 40]
    assert result.endpoints[0].shape == (2000, 1)


def test_mini_free_diagnostics(mini_1d_run):
    result, _cfg = mini_1d_run
    assert result.diagnostics["norm_drift_max"] < 1e-10
    assert result.diagnostics["boundary_mass_max"] < 1e-6
    assert result.diagnostics["masked_evaluations"] == 0
    assert result.dump_steps == (0, 20, 40)


def test_mini_free_trajectory(mini_1d_run):
    result, cfg = mini_1d_run
    traj = result.trajectory
    assert traj.points.shape == (21, 1)
    assert traj.times[-1] == pytest.approx(cfg.trajectory.t_final, rel=1e-12)
    # Free Gaussian: trajectories ride the spreading scale factor.
    sigma = cfg.initial.components[0][0]
    s = np.sqrt(1.0 + (cfg.trajectory.t_final / sigma**2) ** 2)
    assert traj.points[-1, 0] == pytest.approx(2.0 * s, rel=1e-3)


def test_mini_free_bundle_layout(mini_1d_run):
    result, _cfg = mini_1d_run
    bundle = result.bundle_dir
    for rel in ("config.conf", "manifest.json", "stats.json", "diagnostics.json",
                "trajectory.csv", "fields/step_0000.field",
                "fields/step_0020.field.json", "fields/step_0040.field",
                "endpoints/step_0040.csv"):
        assert os.path.exists(os.path.join(bundle, rel)), rel
    assert not os.path.exists(os.path.join(bundle, "channels.json"))
    assert verify_manifest(bundle) == []
    manifest = read_manifest(bundle)
    assert manifest["name"] == "mini-free"
    assert manifest["seed"] == 3
    assert "pilotwave" in manifest["versions"]


def test_reruns_are_byte_identical(tmp_path):
    cfg = parse_config("mini-free", MINI_1D)
    a = run_scenario(cfg, out_dir=str(tmp_path / "a"))
    b = run_scenario(cfg, out_dir=str(tmp_path / "b"))
    ma, mb = read_manifest(a.bundle_dir), read_manifest(b.bundle_dir)
    assert ma["files"] == mb["files"]
    raw_a = open(os.path.join(a.bundle_dir, "manifest.json"), "rb").read()
    raw_b = open(os.path.join(b.bundle_dir, "manifest.json"), "rb").read()
    assert raw_a == raw_b


def test_seed_changes_samples(tmp_path):
    cfg = parse_config("mini-free", MINI_1D)
    a = run_scenario(cfg, out_dir=str(tmp_path / "a"))
    b = run_scenario(cfg.with_sampling(seed=11), out_dir=str(tmp_path / "b"))
    fa = read_manifest(a.bundle_dir)["files"]
    fb = read_manifest(b.bundle_dir)["files"]
    assert fa["endpoints/step_0000.csv"] != fb["endpoints/step_0000.csv"]
    assert fa["fields/step_0000.field"] == fb["fields/step_0000.field"]


@pytest.fixture(scope="module")
def mini_2d_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mini2d")
    cfg = parse_config("mini-split", MINI_2D)
    return run_scenario(cfg, out_dir=str(out / "bundle")), cfg


def test_mini_splitter_channels(mini_2d_run):
    result, _cfg = mini_2d_run
    assert len(result.channels) == 2
    assert result.channels[0].centroid == pytest.approx(0.0, abs=1e-3)
    assert result.channels[1].centroid == pytest.approx(8.0, abs=1e-3)
    for ch in result.channels:
        assert ch.weight == pytest.approx(0.5, abs=5e-3)


def test_mini_splitter_statistics(mini_2d_run):
    result, _cfg = mini_2d_run
    assert all(r.passed for r in result.reports)
    names = [r.name for r in result.reports]
    assert any(n.startswith("equivariance-y") for n in names)
    assert any(n.startswith("conditional-x@y=") for n in names)
    assert any(n.startswith("channel-x-vs-initial") for n in names)
    assert result.diagnostics["x_marginal_l1"] < 1e-3


def test_mini_splitter_bundle(mini_2d_run):
    result, _cfg = mini_2d_run
    bundle = result.bundle_dir
    assert os.path.exists(os.path.join(bundle, "channels.json"))
    assert verify_manifest(bundle) == []
    assert result.dump_steps == (0, 4, 8)


def test_echo_reports_stages(capsys):
    run_scenario(get_builtin("classical-impulse"), echo=print)
    out = capsys.readouterr().out
    assert "integrating" in out and "inference" in out


def test_near_delta_amplifies_initial_offsets():
    cfg = get_builtin("near-delta-sensitivity")
    result = run_scenario(cfg)
    sigma = cfg.initial.components[0][0]
    t_f = cfg.trajectory.t_final
    # trajectories started a probe radius apart separate by the spreading
    # factor s(t) = sqrt(1 + (t / sigma^2)^2); sigma = 0.5 gives 80x at t_f
    exact = math.sqrt(1.0 + (t_f / sigma**2) ** 2)
    factor = result.diagnostics["sensitivity_factor"]
    assert abs(factor - exact) <= 0.01 * exact
    assert cfg.sampling is None
    assert result.endpoints == {}
