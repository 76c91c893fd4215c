"""Exceptions shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for errors raised by this package."""


class FormatError(ToolkitError):
    """Malformed or inconsistent input data; the message names the offending field."""


class BudgetError(ToolkitError):
    """An enumeration would exceed the configured budget; the message names the cap."""
