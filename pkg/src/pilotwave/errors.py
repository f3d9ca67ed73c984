"""Exception hierarchy shared by all modules.

Two branches matter for the command line: ConfigError maps to exit code 2
(bad input: files, keys, values), NumericalAbort maps to exit code 3 (a run
that started but tripped a guard). Everything else is a plain failure.
"""


class PilotWaveError(Exception):
    """Base class for all package errors."""


class ConfigError(PilotWaveError):
    """Invalid configuration, file format, or argument."""


class NumericalAbort(PilotWaveError):
    """A numerical guard tripped during a run."""


class ZeroNorm(NumericalAbort):
    """Field (or field slice) has vanishing norm."""


class UnknownDimension(ConfigError):
    """Unit conversion asked for a dimension the unit system does not know."""


class BoundaryMassExceeded(NumericalAbort):
    """Probability mass reached the grid edge; results would be wrapped."""


class NonUnitaryStep(NumericalAbort):
    """A single evolution step changed the norm beyond tolerance."""


class AllNodes(NumericalAbort):
    """Velocity field is masked everywhere; no usable guidance data."""


class LeftGrid(NumericalAbort):
    """Trajectory stepped outside the grid extent."""


class HitNode(NumericalAbort):
    """Trajectory entered a near-node region even after step refinement."""


class NoChannels(NumericalAbort):
    """Channel detection found no density above threshold."""


class MismatchedTimes(PilotWaveError):
    """Statistics requested between artifacts with different timestamps."""


class TooFewSelected(NumericalAbort):
    """Conditional window selected fewer samples than the test requires."""


class NonFinite(NumericalAbort):
    """State or derivative became NaN/Inf."""


class ZeroDuration(ConfigError):
    """Requested evolution or interaction window has zero length."""


class CorruptHeader(ConfigError):
    """Field dump sidecar is unreadable or inconsistent."""


class TruncatedPayload(ConfigError):
    """Field dump payload is shorter than the header promises."""


class MissingArtifact(ConfigError):
    """A bundle is missing a file that the requested operation needs."""
