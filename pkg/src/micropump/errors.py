"""Exception types raised across the package."""


class MicropumpError(Exception):
    """Base class for domain errors."""


class NonConvergence(MicropumpError):
    """The per-step network solve did not reach its continuity tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotConverged(MicropumpError):
    """A flow record has no converged cycle to report."""


class CalibrationFailed(MicropumpError):
    """Parameter bounds do not bracket a calibration solution."""

    def __init__(self, message, evidence=None):
        super().__init__(message)
        self.evidence = evidence or {}


class ConfigError(Exception):
    """Base class for configuration problems (usage errors, exit code 2)."""


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
