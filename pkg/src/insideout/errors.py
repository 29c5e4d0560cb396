"""Exception types shared across the pipeline."""


class InsideOutError(Exception):
    """Base class for all pipeline errors surfaced to the CLI."""


class DatasetFormatError(InsideOutError):
    """Raised when the FER2013 CSV (or a dataset built from it) is malformed."""


class SplitError(InsideOutError):
    """Raised when a dataset cannot be partitioned as requested."""


class ConfigError(InsideOutError):
    """Raised for invalid or inconsistent run configuration."""


class CheckpointError(InsideOutError):
    """Raised when a checkpoint directory is missing, incomplete, or mismatched."""
