"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit 2,
dataset problems exit 3, an all-models-failed benchmark exits 4.
"""


class LeafbenchError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(LeafbenchError):
    """Invalid configuration: bad dimensions, bad fractions, bad plan."""


class DatasetError(LeafbenchError):
    """Base class for problems with the data on disk."""


class UnknownLabel(DatasetError):
    """A plant or condition name is not part of the label vocabulary."""


class EmptyDataset(DatasetError):
    """No usable images were found under the dataset root."""


class ClassTooSmall(DatasetError):
    """A (plant, condition) class has too few samples to split."""


class DecodeError(DatasetError):
    """An image file could not be decoded; carries the offending path."""


class OutOfRange(DatasetError):
    """Pixel values fall outside the expected [0, 255] range."""


class InvalidPair(LeafbenchError):
    """A (plant, condition) combination that the label space does not allow."""


class ShapeMismatch(LeafbenchError):
    """Array shapes are inconsistent with the operation's contract."""


class DegenerateBatch(LeafbenchError):
    """Batch statistics were requested for a batch of fewer than 2 samples."""


class BackboneUnavailable(LeafbenchError):
    """A named backbone (or its pretrained weights) cannot be provided here."""


class Diverged(LeafbenchError):
    """Training loss became non-finite. Carries the partial run result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class CheckpointCorrupt(LeafbenchError):
    """A model checkpoint directory is missing pieces or inconsistent."""


class NoSuccessfulRuns(LeafbenchError):
    """Every model in a benchmark failed; there is nothing to report."""
