"""Shared exception types."""


class InvalidSpecError(ValueError):
    """Network or config specification violates its invariants."""


class DataError(ValueError):
    """Bad dataset: shapes, missing columns, single-group batches, etc."""


class SingleGroupError(DataError):
    """A batch or dataset contains only one treatment group."""


class CheckpointError(ValueError):
    """Corrupt, truncated, or version-mismatched checkpoint file."""


class NumericalError(RuntimeError):
    """Non-finite loss or gradient encountered during training."""
