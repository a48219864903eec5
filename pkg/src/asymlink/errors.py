"""Exceptions shared across the package."""


class DimensionError(ValueError):
    """Ambient dimensions or grades are incompatible."""


class NearCollisionError(RuntimeError):
    """Two integration points came closer than the near-collision cutoff."""

    def __init__(self, message: str, pair=None):
        super().__init__(message)
        self.pair = pair


class FlowEscapeError(RuntimeError):
    """A trajectory left the domain by more than the tolerance."""


class DegenerateDomainError(ValueError):
    """Rejection sampling acceptance is too small to be useful."""
