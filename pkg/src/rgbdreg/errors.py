"""Exception hierarchy.

Two families matter for the CLI exit codes: ``InputError`` (bad files,
bad configuration, exit code 1) and ``NumericalError`` (the data defeated
the math: degenerate fits, no usable correspondences, exit code 2).
"""


class RegistrationError(Exception):
    """Base class for all package errors."""


class InputError(RegistrationError):
    """Malformed or missing input files / invalid configuration."""


class LoadError(InputError):
    """A file on disk could not be read or failed validation."""


class ConfigError(InputError):
    """Invalid configuration value."""


class GenerationError(InputError):
    """Synthetic scene parameters produced an unusable frame."""


class NumericalError(RegistrationError):
    """A numerical stage failed on otherwise well-formed input."""


class DegenerateFitError(NumericalError):
    """Point configuration does not constrain a rigid transform."""


class InsufficientPointsError(NumericalError):
    """Too few valid points for the requested operation."""


class NoCorrespondencesError(NumericalError):
    """Matching produced no usable correspondences."""
