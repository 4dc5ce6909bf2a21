"""Exception types raised across the toolkit.

Every error carries a short ``kind`` used by the CLI to print a single
machine-parseable line (``dgcformer-error: <kind>: <message>``).
"""


class DGCError(Exception):
    kind = "DGCError"


class MalformedCsv(DGCError, ValueError):
    kind = "MalformedCsv"


class EmptySeries(DGCError, ValueError):
    kind = "EmptySeries"


class MissingValues(DGCError, ValueError):
    kind = "MissingValues"


class SplitTooLarge(DGCError, ValueError):
    kind = "SplitTooLarge"


class SplitTooShort(DGCError, ValueError):
    kind = "SplitTooShort"


class ShapeMismatch(DGCError, ValueError):
    kind = "ShapeMismatch"


class DegenerateCluster(DGCError, ArithmeticError):
    kind = "DegenerateCluster"


class PatchTooLong(DGCError, ValueError):
    kind = "PatchTooLong"


class NonFiniteActivation(DGCError, FloatingPointError):
    kind = "NonFiniteActivation"


class NonFiniteLoss(DGCError, FloatingPointError):
    kind = "NonFiniteLoss"


class ConfigError(DGCError, ValueError):
    kind = "ConfigError"


class DatasetNotFound(ConfigError, FileNotFoundError):
    kind = "DatasetNotFound"


class UsageError(DGCError, ValueError):
    """Bad command-line arguments (unknown flags, out-of-range indices)."""

    kind = "UsageError"
