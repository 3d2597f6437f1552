"""Exception types shared across the package."""


class AquaRLError(Exception):
    """Base class for all package errors."""


class Starved(AquaRLError):
    """Fish weight fell to the configured floor during integration.

    ``state`` holds the clamped state (weight at the floor) so callers that
    want to keep going, e.g. to score a terminal transition, still can.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NonFinite(AquaRLError):
    """A NaN or infinite value appeared in a simulation or update."""


class ConfigError(AquaRLError, ValueError):
    """Invalid configuration value or unreadable config file."""
