"""Shared exception types."""


class GalaxyError(Exception):
    """Base class for package errors."""


class CatalogError(GalaxyError):
    """Bad catalog file or star data."""


class CurveDomainError(GalaxyError):
    """Radius outside the rotation-curve domain."""


class PropagationError(GalaxyError):
    """Integration failure (domain exit, step underflow)."""

    def __init__(self, msg, t=None, pos=None):
        super().__init__(msg)
        self.t = t
        self.pos = pos


class ConfigError(GalaxyError):
    """Invalid run configuration."""


class InfeasibleError(GalaxyError):
    """A strategy found no feasible transfer/settlement."""
