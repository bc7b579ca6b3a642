"""Exception hierarchy shared by all modules."""


class MoconError(Exception):
    """Base class for every error raised by the package."""


class NumericalError(MoconError):
    """A numerical procedure failed (maps to CLI exit code 2)."""


class SingularMetric(NumericalError):
    pass


class DomainError(MoconError):
    """The metric or force callback rejected the evaluation point."""


class StepFailure(NumericalError):
    pass


class ShootingDiverged(NumericalError):
    pass


class ChartNotOrthonormal(MoconError):
    pass


class MissingPotential(MoconError):
    pass


class SphereViolation(MoconError):
    pass


class ZeroTimeComponent(NumericalError):
    pass


class NotAnEquilibrium(MoconError):
    pass


class SelectionOutsideCone(MoconError):
    pass


class DimensionError(MoconError):
    pass


class InvalidLyapunovCandidate(MoconError):
    pass


class ResonantPlan(MoconError):
    pass


class UncontrollableLinearization(MoconError):
    pass


class ConfigError(MoconError):
    """Invalid run configuration (maps to CLI exit code 1)."""


class ConeClampSaturated(UserWarning):
    """Feedback clamped the cone variable to its bounds (warning only)."""
