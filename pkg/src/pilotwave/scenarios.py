"""Declarative experiment registry: parse a sectioned config, run it end to
end, and emit a reproducible results bundle.

A scenario is either quantum (grid + initial field + interaction + ensemble
statistics) or classical (the impulsive pointer toy model); the presence of a
[grid] section decides which. All physical quantities in config text carry SI
unit suffixes; the classical model is dimensionless and uses plain numbers.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import io as bundle_io
from .classical import (
    ClassicalState,
    integrate_hamilton,
    interaction_energy,
    position_readout,
    simultaneous_measurement,
    squared_position_readout,
)
from .conditional import Channel, conditional_slice, detect_channels
from .core import (
    DEFAULT_UNITS,
    Configuration,
    Grid1D,
    Grid2D,
    Trajectory,
    WaveField,
    fidelity,
    gaussian_1d,
    normalize,
    product_field,
)
from .equilibrium import (
    StatReport,
    check_conditional_probability,
    chi_square_report,
    ks_report,
    marginal_cdf,
    sample_positions,
)
from .errors import ConfigError, MissingArtifact, ZeroDuration
from .guidance import SnapshotVelocity, integrate_ensemble, integrate_trajectory
from .schrodinger import (
    EvolutionParams,
    EvolutionResult,
    Hamiltonian1D,
    Hamiltonian2D,
    StaircaseCoupling,
    apply_y_splitter,
    evolve,
)

_LENGTH_SUFFIX = {"m": 1.0, "nm": 1e-9}
_TIME_SUFFIX = {"s": 1.0, "fs": 1e-15}
_VELOCITY_SUFFIX = {"m/s": 1.0}


def _parse_quantity(text: str, dimension: str, key: str) -> float:
    """'15 nm' -> scaled length, '1e5 m/s' -> scaled velocity, etc."""
    parts = text.split()
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected '<number> <unit>', got {text!r}")
    try:
        value = float(parts[0])
    except ValueError:
        raise ConfigError(f"{key}: bad number in {text!r}") from None
    table = {"length": _LENGTH_SUFFIX, "time": _TIME_SUFFIX,
             "velocity": _VELOCITY_SUFFIX}[dimension]
    if parts[1] not in table:
        raise ConfigError(f"{key}: unit {parts[1]!r} is not a {dimension} unit")
    return DEFAULT_UNITS.to_scaled(value * table[parts[1]], dimension)


def _parse_int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _parse_float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _parse_list(text: str, key: str, parse_one) -> tuple:
    items = [p.strip() for p in text.split(",") if p.strip()]
    if not items:
        raise ConfigError(f"{key}: empty list")
    return tuple(parse_one(item, f"{key}[{i}]") for i, item in enumerate(items))


@dataclass(frozen=True)
class GridSpec:
    nx: int
    x_min: float
    x_max: float
    ny: int | None = None
    y_min: float | None = None
    y_max: float | None = None

    @property
    def is_2d(self) -> bool:
        return self.ny is not None

    def build(self):
        gx = Grid1D(self.nx, self.x_min, self.x_max)
        if not self.is_2d:
            return gx
        return Grid2D(gx, Grid1D(self.ny, self.y_min, self.y_max))


@dataclass(frozen=True)
class InitialSpec:
    kind: str  # gaussian | superposition
    components: tuple[tuple[float, float, float], ...]  # (sigma, center, weight)
    sigma_y: float | None = None
    y_0: float | None = None


@dataclass(frozen=True)
class InteractionSpec:
    kind: str  # none | staircase | splitter
    g: float = 0.0
    delta: float = 0.0
    t_on: float = 0.0
    t_off: float = 0.0
    mode: str = "impulsive"
    displacements: tuple[float, ...] = ()
    weights: tuple[float, ...] = ()


@dataclass(frozen=True)
class SamplingSpec:
    n: int
    seed: int
    ens_stride: int
    check_steps: tuple[int, ...]
    window: float | None = None


@dataclass(frozen=True)
class TrajectorySpec:
    t_final: float
    solver_steps: int
    traj_steps: int
    method: str = "split"
    x_start: float | None = None
    y_start: float | None = None
    probe_radius: float | None = None


@dataclass(frozen=True)
class OutputSpec:
    snapshot_stride: int = 0
    dump_stride: int = 0


@dataclass(frozen=True)
class ClassicalSpec:
    kind: str  # position-readout | squared-position-readout | simultaneous
    g: float
    h: float
    x_0: float
    p_x_0: float
    y_0: float
    p_y_0: float
    z_0: float | None
    p_z_0: float | None
    t_final: float
    steps: int


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    config_text: str
    grid: GridSpec | None = None
    initial: InitialSpec | None = None
    interaction: InteractionSpec | None = None
    sampling: SamplingSpec | None = None
    trajectory: TrajectorySpec | None = None
    output: OutputSpec = field(default_factory=OutputSpec)
    classical: ClassicalSpec | None = None

    @property
    def is_classical(self) -> bool:
        return self.classical is not None

    def with_sampling(self, seed: int | None = None, n: int | None = None) -> "ScenarioConfig":
        if seed is None and n is None:
            return self
        if self.sampling is None:
            raise ConfigError(f"scenario {self.name} takes no sampling overrides")
        s = self.sampling
        return replace(self, sampling=replace(
            s, seed=s.seed if seed is None else seed, n=s.n if n is None else n))


def _read_sections(text: str, name: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{name}: unparseable config: {exc}") from None
    return {sec: dict(parser.items(sec)) for sec in parser.sections()}


def _take(raw: dict[str, str], key: str, required: bool = True, default=None):
    if key in raw:
        return raw.pop(key)
    if required:
        raise ConfigError(f"missing required key {key!r}")
    return default


def _no_leftovers(raw: dict[str, str], section: str):
    if raw:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(raw))}")


def _parse_quantum(name: str, text: str, sections: dict) -> ScenarioConfig:
    allowed = {"grid", "initial", "interaction", "sampling", "trajectory", "output"}
    unknown = set(sections) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown sections {sorted(unknown)}")
    for sec in ("grid", "initial", "interaction", "trajectory"):
        if sec not in sections:
            raise ConfigError(f"{name}: missing [{sec}] section")

    raw = dict(sections["grid"])
    nx = _parse_int(_take(raw, "nx"), "nx")
    x_min = _parse_quantity(_take(raw, "x_min"), "length", "x_min")
    x_max = _parse_quantity(_take(raw, "x_max"), "length", "x_max")
    ny = y_min = y_max = None
    if "ny" in raw:
        ny = _parse_int(_take(raw, "ny"), "ny")
        y_min = _parse_quantity(_take(raw, "y_min"), "length", "y_min")
        y_max = _parse_quantity(_take(raw, "y_max"), "length", "y_max")
    _no_leftovers(raw, "grid")
    grid = GridSpec(nx, x_min, x_max, ny, y_min, y_max)

    raw = dict(sections["initial"])
    kind = _take(raw, "kind")
    if kind == "gaussian":
        components = ((_parse_quantity(_take(raw, "sigma_x"), "length", "sigma_x"),
                       _parse_quantity(_take(raw, "x_0"), "length", "x_0"), 1.0),)
    elif kind == "superposition":
        count = _parse_int(_take(raw, "components"), "components")
        if count < 2:
            raise ConfigError("superposition needs at least 2 components")
        components = []
        for k in range(1, count + 1):
            components.append((
                _parse_quantity(_take(raw, f"sigma_x_{k}"), "length", f"sigma_x_{k}"),
                _parse_quantity(_take(raw, f"x_0_{k}"), "length", f"x_0_{k}"),
                _parse_float(_take(raw, f"weight_{k}"), f"weight_{k}"),
            ))
        components = tuple(components)
        total = sum(c[2] for c in components)
        if any(c[2] <= 0 for c in components) or abs(total - 1.0) > 1e-9:
            raise ConfigError(f"superposition weights must be positive and sum to 1, got {total}")
    else:
        raise ConfigError(f"unknown initial kind {kind!r}")
    sigma_y = y_0 = None
    if grid.is_2d:
        sigma_y = _parse_quantity(_take(raw, "sigma_y"), "length", "sigma_y")
        y_0 = _parse_quantity(_take(raw, "y_0"), "length", "y_0")
    _no_leftovers(raw, "initial")
    if any(c[0] <= 0 for c in components) or (sigma_y is not None and sigma_y <= 0):
        raise ConfigError("dispersions must be positive")
    initial = InitialSpec(kind, components, sigma_y, y_0)

    raw = dict(sections["interaction"])
    ikind = _take(raw, "kind")
    if ikind == "none":
        interaction = InteractionSpec("none")
    elif ikind == "staircase":
        if not grid.is_2d:
            raise ConfigError("staircase coupling needs a pointer axis")
        interaction = InteractionSpec(
            "staircase",
            g=_parse_quantity(_take(raw, "g"), "velocity", "g"),
            delta=_parse_quantity(_take(raw, "delta"), "length", "delta"),
            t_on=_parse_quantity(_take(raw, "t_on"), "time", "t_on"),
            t_off=_parse_quantity(_take(raw, "t_off"), "time", "t_off"),
            mode=_take(raw, "mode"),
        )
        if interaction.mode not in ("impulsive", "full"):
            raise ConfigError(f"unknown staircase mode {interaction.mode!r}")
        if interaction.g <= 0 or interaction.delta <= 0:
            raise ConfigError("staircase needs g > 0 and delta > 0")
        if not 0 <= interaction.t_on < interaction.t_off:
            raise ConfigError("staircase window must satisfy 0 <= t_on < t_off")
    elif ikind == "splitter":
        if not grid.is_2d:
            raise ConfigError("splitter needs a pointer axis")
        displacements = _parse_list(
            _take(raw, "displacements"), "displacements",
            lambda s, k: _parse_quantity(s, "length", k))
        weights = _parse_list(_take(raw, "weights"), "weights", _parse_float)
        if len(weights) != len(displacements):
            raise ConfigError("displacements and weights differ in length")
        if any(w <= 0 for w in weights):
            raise ConfigError("splitter weights must be positive")
        total = sum(weights)
        interaction = InteractionSpec(
            "splitter", displacements=displacements,
            weights=tuple(w / total for w in weights))
    else:
        raise ConfigError(f"unknown interaction kind {ikind!r}")
    _no_leftovers(raw, "interaction")

    raw = dict(sections["trajectory"])
    t_final = _parse_quantity(_take(raw, "t_final"), "time", "t_final")
    if t_final <= 0:
        raise ZeroDuration("t_final must be positive")
    solver_steps = _parse_int(_take(raw, "solver_steps"), "solver_steps")
    traj_steps = _parse_int(_take(raw, "traj_steps", required=False,
                                  default=str(solver_steps)), "traj_steps")
    method = _take(raw, "method", required=False, default="split")
    if method not in ("split", "cn"):
        raise ConfigError(f"unknown method {method!r}")
    if solver_steps < 1 or traj_steps < 1:
        raise ConfigError("solver_steps and traj_steps must be >= 1")
    x_start = raw.pop("x_start", None)
    y_start = raw.pop("y_start", None)
    probe_radius = raw.pop("probe_radius", None)
    trajectory = TrajectorySpec(
        t_final, solver_steps, traj_steps, method,
        None if x_start is None else _parse_quantity(x_start, "length", "x_start"),
        None if y_start is None else _parse_quantity(y_start, "length", "y_start"),
        None if probe_radius is None else _parse_quantity(probe_radius, "length", "probe_radius"),
    )
    _no_leftovers(raw, "trajectory")
    if grid.is_2d and trajectory.x_start is not None and trajectory.y_start is None:
        raise ConfigError("2D highlighted trajectory needs y_start")
    if method == "split":
        for n_pts, axis in ((grid.nx, "nx"), (grid.ny, "ny")):
            if n_pts is not None and n_pts & (n_pts - 1):
                raise ConfigError(f"{axis}={n_pts} must be a power of two for the split method")
    if interaction.kind == "staircase" and interaction.t_off > t_final * (1 + 1e-12):
        raise ConfigError("staircase window extends past t_final")

    sampling = None
    if "sampling" in sections:
        raw = dict(sections["sampling"])
        n = _parse_int(_take(raw, "n"), "n")
        seed = _parse_int(_take(raw, "seed"), "seed")
        ens_stride = _parse_int(_take(raw, "ens_stride", required=False, default="1"),
                                "ens_stride")
        check_steps = _parse_list(_take(raw, "check_steps"), "check_steps", _parse_int)
        window = raw.pop("window", None)
        _no_leftovers(raw, "sampling")
        if n < 1 or ens_stride < 1:
            raise ConfigError("n and ens_stride must be >= 1")
        if list(check_steps) != sorted(set(check_steps)):
            raise ConfigError("check_steps must be strictly increasing")
        for k in check_steps:
            if not 0 < k <= solver_steps:
                raise ConfigError(f"check step {k} outside 1..{solver_steps}")
            if k % ens_stride:
                raise ConfigError(f"check step {k} not a multiple of ens_stride")
        sampling = SamplingSpec(
            n, seed, ens_stride, check_steps,
            None if window is None else _parse_quantity(window, "length", "window"))

    output = OutputSpec()
    if "output" in sections:
        raw = dict(sections["output"])
        snapshot_stride = _parse_int(_take(raw, "snapshot_stride", required=False,
                                           default="0"), "snapshot_stride")
        dump_stride = _parse_int(_take(raw, "dump_stride", required=False, default="0"),
                                 "dump_stride")
        _no_leftovers(raw, "output")
        if snapshot_stride < 0 or dump_stride < 0:
            raise ConfigError("strides must be non-negative")
        if dump_stride and not snapshot_stride:
            raise ConfigError("dump_stride needs snapshot_stride to record those steps")
        if dump_stride and snapshot_stride and dump_stride % snapshot_stride:
            raise ConfigError("dump_stride must be a multiple of snapshot_stride")
        output = OutputSpec(snapshot_stride, dump_stride)

    return ScenarioConfig(name=name, config_text=text, grid=grid, initial=initial,
                          interaction=interaction, sampling=sampling,
                          trajectory=trajectory, output=output)


def _parse_classical(name: str, text: str, sections: dict) -> ScenarioConfig:
    allowed = {"initial", "interaction", "trajectory"}
    unknown = set(sections) - allowed
    if unknown:
        raise ConfigError(f"{name}: sections {sorted(unknown)} not valid without a [grid]")
    for sec in allowed:
        if sec not in sections:
            raise ConfigError(f"{name}: missing [{sec}] section")

    raw = dict(sections["initial"])
    x_0 = _parse_float(_take(raw, "x_0"), "x_0")
    p_x_0 = _parse_float(_take(raw, "p_x_0"), "p_x_0")
    y_0 = _parse_float(_take(raw, "y_0"), "y_0")
    p_y_0 = _parse_float(_take(raw, "p_y_0"), "p_y_0")
    z_0 = raw.pop("z_0", None)
    p_z_0 = raw.pop("p_z_0", None)
    _no_leftovers(raw, "initial")
    if (z_0 is None) != (p_z_0 is None):
        raise ConfigError("z_0 and p_z_0 come as a pair")

    raw = dict(sections["interaction"])
    kind = _take(raw, "kind")
    if kind not in ("position-readout", "squared-position-readout", "simultaneous"):
        raise ConfigError(f"unknown classical interaction {kind!r}")
    g = _parse_float(_take(raw, "g"), "g")
    h = _parse_float(_take(raw, "h", required=False, default="0"), "h")
    _no_leftovers(raw, "interaction")
    if kind == "simultaneous" and (h == 0 or z_0 is None):
        raise ConfigError("simultaneous readout needs h != 0 and a second pointer")

    raw = dict(sections["trajectory"])
    t_final = _parse_float(_take(raw, "t_final"), "t_final")
    steps = _parse_int(_take(raw, "steps"), "steps")
    _no_leftovers(raw, "trajectory")
    if t_final <= 0 or steps < 1:
        raise ZeroDuration("classical run needs t_final > 0 and steps >= 1")

    spec = ClassicalSpec(kind, g, h, x_0, p_x_0, y_0, p_y_0,
                         None if z_0 is None else _parse_float(z_0, "z_0"),
                         None if p_z_0 is None else _parse_float(p_z_0, "p_z_0"),
                         t_final, steps)
    return ScenarioConfig(name=name, config_text=text, classical=spec)


def parse_config(name: str, text: str) -> ScenarioConfig:
    sections = _read_sections(text, name)
    if not sections:
        raise ConfigError(f"{name}: config has no sections")
    if "grid" in sections:
        return _parse_quantum(name, text, sections)
    return _parse_classical(name, text, sections)


def load_config(path: str) -> ScenarioConfig:
    if not os.path.exists(path):
        raise MissingArtifact(f"no config file at {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    name = os.path.splitext(os.path.basename(path))[0]
    return parse_config(name, text)


# --- builtin registry ------------------------------------------------------

# Pointer-axis extents cover g*(t_off - t_on)*A(x) for every x the grid can
# hold, plus the pointer packet tails; that rules out both spectral
# wrap-around of displaced branches and ensemble members walking off the grid.
_BUILTIN_TEXT = {
    "position-measurement": """
[grid]
nx = 512
x_min = -42.5 nm
x_max = 62.5 nm
ny = 2048
y_min = -45 nm
y_max = 70 nm

[initial]
kind = gaussian
sigma_x = 15 nm
x_0 = 10 nm
sigma_y = 0.5 nm
y_0 = 0 nm

[interaction]
kind = staircase
g = 1e5 m/s
delta = 15 nm
t_on = 0 s
t_off = 6.7e-14 s
mode = impulsive

[sampling]
n = 10000
seed = 7
ens_stride = 2
check_steps = 24, 50, 76
window = 0.125 nm

[trajectory]
t_final = 6.7e-14 s
solver_steps = 76
traj_steps = 76
x_start = 20 nm
y_start = 0 nm

[output]
snapshot_stride = 0
dump_stride = 0
""",
    "fake-measurement": """
[grid]
nx = 512
x_min = -42.5 nm
x_max = 62.5 nm
ny = 512
y_min = -8 nm
y_max = 48 nm

[initial]
kind = gaussian
sigma_x = 15 nm
x_0 = 10 nm
sigma_y = 0.5 nm
y_0 = 0 nm

[interaction]
kind = splitter
displacements = 6.7 nm, 20.1 nm, 33.5 nm
weights = 1, 1, 1

[sampling]
n = 10000
seed = 7
ens_stride = 1
check_steps = 28
window = 0.125 nm

[trajectory]
t_final = 3.023297459805e-15 s
solver_steps = 28
traj_steps = 28
x_start = 10 nm
y_start = 20.1 nm

[output]
snapshot_stride = 2
dump_stride = 14
""",
    "superposition-nonmeasurability": """
[grid]
nx = 512
x_min = -20 nm
x_max = 50 nm
ny = 1024
y_min = -26 nm
y_max = 40 nm

[initial]
kind = superposition
components = 2
sigma_x_1 = 2 nm
x_0_1 = 7.5 nm
weight_1 = 0.5
sigma_x_2 = 2 nm
x_0_2 = 22.5 nm
weight_2 = 0.5
sigma_y = 0.5 nm
y_0 = 0 nm

[interaction]
kind = staircase
g = 1e5 m/s
delta = 15 nm
t_on = 0 s
t_off = 6.7e-14 s
mode = impulsive

[sampling]
n = 10000
seed = 7
ens_stride = 2
check_steps = 62
window = 0.125 nm

[trajectory]
t_final = 6.7e-14 s
solver_steps = 62
traj_steps = 62
x_start = 7.5 nm
y_start = 0 nm

[output]
snapshot_stride = 0
dump_stride = 0
""",
    "free-gaussian-equivariance": """
[grid]
nx = 1024
x_min = -60 nm
x_max = 60 nm

[initial]
kind = gaussian
sigma_x = 5 nm
x_0 = 0 nm

[interaction]
kind = none

[sampling]
n = 10000
seed = 7
ens_stride = 8
check_steps = 216, 432, 864

[trajectory]
t_final = 3.7316128646736e-13 s
solver_steps = 864
traj_steps = 108
x_start = 5 nm

[output]
snapshot_stride = 8
dump_stride = 216
""",
    "near-delta-sensitivity": """
[grid]
nx = 4096
x_min = -240 nm
x_max = 240 nm

[initial]
kind = gaussian
sigma_x = 0.5 nm
x_0 = 0 nm

[interaction]
kind = none

[trajectory]
t_final = 1.72759854846e-13 s
solver_steps = 1600
traj_steps = 800
x_start = 0.1 nm
probe_radius = 0.1 nm

[output]
snapshot_stride = 0
dump_stride = 0
""",
    "classical-impulse": """
[initial]
x_0 = 1.3
p_x_0 = 0.7
y_0 = 0
p_y_0 = 0

[interaction]
kind = position-readout
g = 1

[trajectory]
t_final = 1
steps = 1000
""",
    "classical-simultaneous": """
[initial]
x_0 = 2
p_x_0 = 3
y_0 = 0
p_y_0 = 0
z_0 = 0
p_z_0 = 0

[interaction]
kind = simultaneous
g = 1
h = 1

[trajectory]
t_final = 1
steps = 1000
""",
}

BUILTIN_DESCRIPTIONS = {
    "position-measurement": "staircase pointer coupling on a wide packet; channelized readout",
    "fake-measurement": "x-independent pointer splitter; pointer moves, position info stays zero",
    "superposition-nonmeasurability": "two-branch input; pointer always reports one branch",
    "near-delta-sensitivity": "narrow packet; endpoint spread vs an initial probe ball",
    "free-gaussian-equivariance": "free spreading packet; sampled ensemble tracks the density",
    "classical-impulse": "classical pointer kick; position read without disturbance",
    "classical-simultaneous": "two classical pointers; position and momentum read together",
}


def builtin_config_text(name: str) -> str:
    try:
        return _BUILTIN_TEXT[name].lstrip("\n")
    except KeyError:
        raise ConfigError(f"no builtin scenario named {name!r}") from None


def builtin_names() -> list[str]:
    return list(_BUILTIN_TEXT)


def builtin_scenarios() -> list[ScenarioConfig]:
    return [parse_config(name, builtin_config_text(name)) for name in builtin_names()]


def get_builtin(name: str) -> ScenarioConfig:
    return parse_config(name, builtin_config_text(name))


# --- running ---------------------------------------------------------------


@dataclass
class ScenarioResult:
    name: str
    config_text: str
    evolution: EvolutionResult | None = None
    dump_steps: tuple[int, ...] = ()
    trajectory: Trajectory | None = None
    classical_states: list[ClassicalState] | None = None
    endpoints: dict[int, np.ndarray] = field(default_factory=dict)
    channels: list[Channel] = field(default_factory=list)
    reports: list[StatReport] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    bundle_dir: str | None = None

    def field_at_step(self, step: int) -> WaveField:
        dt = self.diagnostics["dt"]
        return self.evolution.at_time(step * dt)


def _superposition_addends(grid, spec: InitialSpec) -> list[WaveField]:
    """The exact weighted terms whose sum is the (normalized) joint state.

    One shared normalization constant: re-normalizing each term separately
    would shift them against the joint by the branch overlap and spoil
    sum-vs-joint comparisons after evolution.
    """
    fy_vals = gaussian_1d(grid.y, spec.sigma_y, spec.y_0).values
    raw = [np.sqrt(w) * np.outer(gaussian_1d(grid.x, sigma, center).values, fy_vals)
           for sigma, center, w in spec.components]
    total = WaveField(grid, sum(raw), 0.0)
    nrm = np.sqrt(total.norm_sq())
    return [WaveField(grid, r / nrm, 0.0) for r in raw]


def _initial_field(grid, spec: InitialSpec, grid_spec: GridSpec) -> WaveField:
    if grid_spec.is_2d and len(spec.components) > 1:
        addends = _superposition_addends(grid, spec)
        return WaveField(grid, sum(a.values for a in addends), 0.0)
    gx = grid if not grid_spec.is_2d else grid.x
    values = np.zeros(grid_spec.nx, dtype=complex)
    for sigma, center, weight in spec.components:
        values = values + np.sqrt(weight) * gaussian_1d(gx, sigma, center).values
    fx = normalize(WaveField(gx, values, 0.0))
    if not grid_spec.is_2d:
        return fx
    fy = gaussian_1d(grid.y, spec.sigma_y, spec.y_0)
    return normalize(product_field(fx, fy))


def _probe_record_steps(solver_steps: int) -> list[int]:
    # Early records must resolve the initial sigma^2 spreading timescale;
    # late records can thin out once the flow map is nearly linear.
    early_until = max(1, solver_steps // 20)
    early_gap = max(1, solver_steps // 160)
    late_gap = max(1, solver_steps // 32)
    steps = set(range(0, early_until + 1, early_gap))
    s = solver_steps
    while s > early_until:
        steps.add(s)
        s -= late_gap
    return sorted(steps)


def _stat_block(field_t: WaveField, samples: np.ndarray, t: float) -> list[StatReport]:
    reports = []
    names = ("x",) if field_t.is_1d else ("x", "y")
    for axis, ax_name in enumerate(names):
        points, cdf = marginal_cdf(field_t, axis)
        reports.append(ks_report(samples[:, axis], points, cdf,
                                 f"equivariance-{ax_name}@t={t:g}"))
        reports.append(chi_square_report(samples[:, axis], points, cdf,
                                         f"chi2-{ax_name}@t={t:g}"))
    return reports


def _run_quantum(cfg: ScenarioConfig, echo) -> ScenarioResult:
    grid_spec, traj_spec = cfg.grid, cfg.trajectory
    grid = grid_spec.build()
    dt = traj_spec.t_final / traj_spec.solver_steps
    initial = _initial_field(grid, cfg.initial, grid_spec)

    inter = cfg.interaction
    coupling = None
    if inter.kind == "staircase":
        coupling = StaircaseCoupling(inter.g, inter.delta, inter.t_on, inter.t_off)
    if grid_spec.is_2d:
        ham = Hamiltonian2D(coupling=coupling,
                            impulsive=(coupling is not None and inter.mode == "impulsive"))
    else:
        ham = Hamiltonian1D()
    if inter.kind == "splitter":
        initial = normalize(apply_y_splitter(initial, inter.displacements, inter.weights))

    check_steps = cfg.sampling.check_steps if cfg.sampling else ()
    record_steps = set(check_steps)
    if traj_spec.probe_radius is not None:
        record_steps.update(_probe_record_steps(traj_spec.solver_steps))
    record_times = tuple(sorted(k * dt for k in record_steps if 0 < k < traj_spec.solver_steps))

    params = EvolutionParams(dt=dt, steps=traj_spec.solver_steps, method=traj_spec.method,
                             snapshot_stride=cfg.output.snapshot_stride,
                             record_times=record_times)
    if echo:
        echo(f"evolving {cfg.name}: {traj_spec.solver_steps} steps of dt={dt:.6g}")
    evolution = evolve(initial, ham, params)

    result = ScenarioResult(name=cfg.name, config_text=cfg.config_text, evolution=evolution)
    result.diagnostics.update({
        "dt": dt,
        "solver_steps": traj_spec.solver_steps,
        "norm_drift_max": evolution.norm_drift_max,
        "boundary_mass_max": evolution.boundary_mass_max,
        "n_snapshots": len(evolution.snapshots),
    })

    dump = {0, traj_spec.solver_steps} | set(check_steps)
    if cfg.output.dump_stride:
        dump.update(range(0, traj_spec.solver_steps + 1, cfg.output.dump_stride))
    result.dump_steps = tuple(sorted(dump))

    final = evolution.final
    if grid_spec.is_2d and inter.kind in ("staircase", "splitter"):
        result.channels = detect_channels(final)
        if echo:
            echo(f"{len(result.channels)} pointer channels detected")

    history = SnapshotVelocity(evolution.snapshots, ham)
    if traj_spec.x_start is not None:
        start_pos = ((traj_spec.x_start,) if not grid_spec.is_2d
                     else (traj_spec.x_start, traj_spec.y_start))
        dt_traj = traj_spec.t_final / traj_spec.traj_steps
        result.trajectory = integrate_trajectory(
            history, Configuration(start_pos, 0.0), dt_traj, traj_spec.traj_steps)

    if traj_spec.probe_radius is not None:
        r = traj_spec.probe_radius
        center = traj_spec.x_start if traj_spec.x_start is not None else 0.0
        dt_traj = traj_spec.t_final / traj_spec.traj_steps
        ends = []
        for offset in (-r, r):
            probe = integrate_trajectory(history, Configuration((center + offset,), 0.0),
                                         dt_traj, traj_spec.traj_steps)
            ends.append(probe.points[-1, 0])
        factor = (ends[1] - ends[0]) / (2.0 * r)
        result.diagnostics["probe_radius"] = r
        result.diagnostics["sensitivity_factor"] = factor
        if echo:
            echo(f"probe ball of radius {r:g} grew by factor {factor:.3g}")

    if cfg.sampling:
        samp = cfg.sampling
        rng = np.random.default_rng(samp.seed)
        t0_field = evolution.snapshots[0]
        starts = sample_positions(t0_field, samp.n, rng)
        result.endpoints[0] = starts
        if check_steps:
            track = integrate_ensemble(history, starts, 0.0,
                                       [k * dt for k in check_steps],
                                       samp.ens_stride * dt)
            result.diagnostics["masked_evaluations"] = track.masked_evaluations
            for k in check_steps:
                samples = track.at(k * dt)
                result.endpoints[k] = samples
                result.reports.extend(_stat_block(evolution.at_time(k * dt), samples, k * dt))

        window = samp.window
        if window is None and cfg.initial.sigma_y is not None:
            window = cfg.initial.sigma_y / 4.0
        if grid_spec.is_2d and window is not None:
            # Product check at t=0: selection on the pointer must not bias x.
            sel0 = np.abs(starts[:, 1] - cfg.initial.y_0) <= 0.5 * window
            if sel0.sum() >= 200:
                result.reports.append(check_conditional_probability(
                    t0_field, starts, cfg.initial.y_0, window))
            last = check_steps[-1] if check_steps else None
            if last is not None and result.channels:
                samples = result.endpoints[last]
                points0, cdf0 = marginal_cdf(t0_field, 0)
                for ch in result.channels:
                    inside = np.abs(samples[:, 1] - ch.centroid) <= 0.5 * window
                    if inside.sum() < 200:
                        continue
                    result.reports.append(check_conditional_probability(
                        evolution.at_time(last * dt), samples, ch.centroid, window))
                    if inter.kind == "splitter":
                        result.reports.append(ks_report(
                            samples[inside, 0], points0, cdf0,
                            f"channel-x-vs-initial@y={ch.centroid:g}"))

    if inter.kind == "splitter":
        rho0 = evolution.snapshots[0].density().sum(axis=1) * grid.y.dx
        rho1 = final.density().sum(axis=1) * grid.y.dx
        result.diagnostics["x_marginal_l1"] = float(np.abs(rho1 - rho0).sum() * grid.x.dx)

    if inter.kind == "staircase" and traj_spec.x_start is not None and result.trajectory is not None:
        end = result.trajectory.points[-1]
        slice_final = conditional_slice(final, end[1])
        slice_start = conditional_slice(evolution.snapshots[0], traj_spec.y_start)
        result.diagnostics["final_slice_fidelity"] = fidelity(slice_final, slice_start)

    if cfg.initial.kind == "superposition" and grid_spec.is_2d:
        _superposition_extras(cfg, grid, ham, params, result)

    return result


def _superposition_extras(cfg: ScenarioConfig, grid, ham, params, result: ScenarioResult):
    """Linearity of the evolution plus the branch bookkeeping of the pointer."""
    lean = EvolutionParams(dt=params.dt, steps=params.steps, method=params.method)
    finals = [evolve(addend, ham, lean).final
              for addend in _superposition_addends(grid, cfg.initial)]
    combined = sum(f.values for f in finals)
    diff = np.abs(combined - result.evolution.final.values).max()
    result.diagnostics["linearity_max_diff"] = float(diff)

    last = max(result.endpoints) if result.endpoints else None
    if last and result.channels:
        samples = result.endpoints[last]
        centroids = np.array([ch.centroid for ch in result.channels])
        dist = np.abs(samples[:, 1][:, None] - centroids[None, :])
        nearest = dist.argmin(axis=1)
        counts = np.bincount(nearest, minlength=len(centroids))
        result.diagnostics["channel_frequencies"] = (counts / len(samples)).tolist()
        result.diagnostics["pointer_max_centroid_distance"] = float(
            dist[np.arange(len(samples)), nearest].max())


def _run_classical(cfg: ScenarioConfig, echo) -> ScenarioResult:
    spec = cfg.classical
    state0 = ClassicalState(spec.x_0, spec.p_x_0, spec.y_0, spec.p_y_0,
                            spec.z_0, spec.p_z_0)
    dt = spec.t_final / spec.steps
    coupling = {
        "position-readout": lambda: position_readout(spec.g, spec.h),
        "squared-position-readout": lambda: squared_position_readout(spec.g),
        "simultaneous": lambda: position_readout(spec.g, spec.h),
    }[spec.kind]()
    if echo:
        echo(f"integrating {cfg.name}: {spec.steps} steps of dt={dt:g}")
    states = integrate_hamilton(state0, coupling, spec.t_final, dt)

    result = ScenarioResult(name=cfg.name, config_text=cfg.config_text,
                            classical_states=states)
    energies = [interaction_energy(s, coupling) for s in states]
    scale = max(1.0, abs(energies[0]))
    result.diagnostics.update({
        "dt": dt,
        "steps": spec.steps,
        "energy_drift_max": float(max(abs(e - energies[0]) for e in energies) / scale),
        "pointer_momentum_drift": float(max(abs(s.p_y - state0.p_y) for s in states)),
    })

    final = states[-1]
    if spec.kind == "simultaneous":
        inferred = simultaneous_measurement(state0, spec.g, spec.h, spec.t_final, dt)
        result.extras["inference"] = {
            "x_0_true": spec.x_0, "x_0_inferred": inferred.x0,
            "p_x_0_true": spec.p_x_0, "p_x_0_inferred": inferred.p_x0,
            "x_0_error": abs(inferred.x0 - spec.x_0),
            "p_x_0_error": abs(inferred.p_x0 - spec.p_x_0),
        }
    else:
        x0_inferred = (final.y - spec.y_0) / (spec.g * spec.t_final)
        result.extras["inference"] = {
            "x_0_true": spec.x_0, "x_0_inferred": x0_inferred,
            "x_0_error": abs(x0_inferred - spec.x_0),
            "position_disturbance": abs(final.x - spec.x_0),
            "momentum_disturbance": abs(final.p_x - spec.p_x_0),
        }
    if echo:
        echo(f"inference: {result.extras['inference']}")
    return result


def run_scenario(cfg: ScenarioConfig, out_dir: str | None = None,
                 echo=None) -> ScenarioResult:
    """Run one scenario; optionally write its bundle under out_dir."""
    if cfg.is_classical:
        result = _run_classical(cfg, echo)
    else:
        result = _run_quantum(cfg, echo)
    if out_dir is not None:
        write_bundle(result, cfg, out_dir)
    return result


def write_bundle(result: ScenarioResult, cfg: ScenarioConfig, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.conf"), "w", encoding="utf-8") as fh:
        fh.write(cfg.config_text)

    if result.classical_states is not None:
        bundle_io.write_classical_trajectory(
            os.path.join(out_dir, "trajectory.csv"), result.classical_states)
        bundle_io.write_json(os.path.join(out_dir, "inference.json"),
                             result.extras.get("inference", {}))
    else:
        fields_dir = os.path.join(out_dir, "fields")
        os.makedirs(fields_dir, exist_ok=True)
        for step in result.dump_steps:
            bundle_io.write_field(os.path.join(fields_dir, f"step_{step:04d}"),
                                  result.field_at_step(step))
        if result.endpoints:
            ep_dir = os.path.join(out_dir, "endpoints")
            os.makedirs(ep_dir, exist_ok=True)
            for step in sorted(result.endpoints):
                bundle_io.write_endpoints(
                    os.path.join(ep_dir, f"step_{step:04d}.csv"), result.endpoints[step])
        if result.trajectory is not None:
            bundle_io.write_trajectory(os.path.join(out_dir, "trajectory.csv"),
                                       result.trajectory)
        if result.channels:
            bundle_io.write_json(os.path.join(out_dir, "channels.json"), [
                {"y_lo_m": DEFAULT_UNITS.to_si(ch.y_lo, "length"),
                 "y_hi_m": DEFAULT_UNITS.to_si(ch.y_hi, "length"),
                 "centroid_m": DEFAULT_UNITS.to_si(ch.centroid, "length"),
                 "weight": ch.weight} for ch in result.channels])
        bundle_io.write_stat_reports(os.path.join(out_dir, "stats.json"), result.reports)

    bundle_io.write_json(os.path.join(out_dir, "diagnostics.json"), result.diagnostics)

    import scipy
    from . import __version__
    meta = {
        "format": "pilotwave-bundle-v1",
        "name": result.name,
        "kind": "classical" if result.classical_states is not None else "quantum",
        "versions": {
            "pilotwave": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if cfg.sampling:
        meta["seed"] = cfg.sampling.seed
        meta["n"] = cfg.sampling.n
        meta["check_steps"] = list(cfg.sampling.check_steps)
        if cfg.sampling.window is not None:
            meta["window_m"] = DEFAULT_UNITS.to_si(cfg.sampling.window, "length")
        elif cfg.initial is not None and cfg.initial.sigma_y is not None:
            meta["window_m"] = DEFAULT_UNITS.to_si(cfg.initial.sigma_y / 4.0, "length")
    bundle_io.write_manifest(out_dir, meta)
    result.bundle_dir = out_dir
    return out_dir
