"""Shared exception types."""


class TabsynthError(Exception):
    """Base class for all errors raised by this package."""


class LoadError(TabsynthError):
    """Malformed input file (CSV, manifest, corpus)."""


class ValidationError(TabsynthError):
    """Inputs violate an operation's preconditions."""


class CheckpointError(TabsynthError):
    """Unreadable or incompatible model checkpoint."""


class PluginError(TabsynthError):
    """An external subprocess plugin violated its protocol."""


class SamplingBudgetError(TabsynthError):
    """Sampling attempt budget exhausted before the requested row count.

    Carries whatever was produced so callers can inspect partial output.
    """

    def __init__(self, message, partial_table=None, report=None):
        super().__init__(message)
        self.partial_table = partial_table
        self.report = report
