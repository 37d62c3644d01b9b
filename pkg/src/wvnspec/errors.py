"""Exception hierarchy shared by all modules."""


class WvnError(Exception):
    """Base class for domain errors raised by the library."""


class ConfigError(WvnError, ValueError):
    """Malformed or invalid configuration; the message names the key or invariant."""


class DomainError(WvnError, ValueError):
    """A spectral parameter or index lies outside the admissible set."""


class ConvergenceError(WvnError, RuntimeError):
    """An integrator, root finder or limit extraction did not converge."""

    def __init__(self, message, *, details=None):
        super().__init__(message)
        self.details = details or {}
