"""Numerical laboratory for deterministic pilot-wave dynamics."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    DEFAULT_UNITS,
    Configuration,
    Grid1D,
    Grid2D,
    Trajectory,
    UnitSystem,
    WaveField,
    convert_si_to_scaled,
    fidelity,
    gaussian_1d,
    normalize,
    product_field,
)
from .classical import (  # noqa: F401
    ClassicalState,
    integrate_hamilton,
    position_readout,
    simultaneous_measurement,
    squared_position_readout,
)
from .conditional import (  # noqa: F401
    Channel,
    conditional_residual,
    conditional_slice,
    detect_channels,
    effective_exists,
)
from .equilibrium import (  # noqa: F401
    KS_CRITICAL_1PCT,
    StatReport,
    check_conditional_probability,
    check_equivariance,
    chi_square_report,
    ks_report,
    marginal_cdf,
    sample_positions,
)
from .guidance import (  # noqa: F401
    SnapshotVelocity,
    integrate_ensemble,
    integrate_trajectory,
    velocity_from_field,
)
from .schrodinger import (  # noqa: F401
    EvolutionParams,
    EvolutionResult,
    Hamiltonian1D,
    Hamiltonian2D,
    StaircaseCoupling,
    apply_y_splitter,
    evolve,
    staircase_profile,
)
from .scenarios import (  # noqa: F401
    ScenarioConfig,
    ScenarioResult,
    builtin_names,
    builtin_scenarios,
    get_builtin,
    load_config,
    parse_config,
    run_scenario,
)
