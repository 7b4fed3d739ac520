"""Shared exception base classes."""


class GendtError(Exception):
    """Base class for every engine-level error."""


class EmptyInput(GendtError):
    """An operation that requires samples received an empty list."""
