"""Exception types shared across the toolkit."""


class LcsError(Exception):
    """Base class for toolkit failures."""


class GridFileError(LcsError):
    """Malformed or inconsistent binary grid container."""


class DomainError(LcsError):
    """Query or trajectory left the declared domain on a non-periodic axis."""

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class IntegrationError(LcsError):
    """Step-size underflow or step budget exhausted."""


class BlowUpError(LcsError):
    """Spectral solver produced a non-finite state."""


class ConfigError(LcsError):
    """Invalid pipeline configuration."""
