"""Exception hierarchy shared by all modules.

The CLI maps these onto its exit-code contract: configuration problems
exit 2, numerical/evaluation failures exit 3.
"""


class GbsdeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GbsdeError):
    """Invalid arguments, dimension mismatches, malformed configuration."""


class NumericalError(GbsdeError):
    """A numerical procedure failed (rank deficiency, bracket failure...)."""


class EvaluationError(GbsdeError):
    """A driver or claim produced a non-finite value.

    ``component`` carries the index of the offending component when known.
    """

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component
