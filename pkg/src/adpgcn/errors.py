"""Exception hierarchy shared by all adpgcn modules.

The CLI maps the three branches to exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class AdpgcnError(Exception):
    """Base class for all errors raised by this package."""


# --- configuration -----------------------------------------------------------


class ConfigError(AdpgcnError):
    """Invalid model/training/run configuration."""


class LabelLongerThanInput(ConfigError):
    """label_len exceeds seq_len."""


class InvalidCoupling(ConfigError):
    """Malformed coupling spec for the synthetic generator."""


class InvalidSplit(ConfigError):
    """Split fractions are not positive or would leave an empty segment."""


class ConfigMismatch(ConfigError):
    """Checkpoint configuration incompatible with the supplied dataset."""


# --- data / IO ----------------------------------------------------------------


class DataError(AdpgcnError):
    """Problem with an input dataset or stored artifact."""


class MissingValue(DataError):
    def __init__(self, row, col):
        self.row, self.col = row, col
        super().__init__(f"missing value at row {row}, column {col}")


class ParseError(DataError):
    def __init__(self, row, col, detail=""):
        self.row, self.col = row, col
        super().__init__(f"cannot parse row {row}, column {col}: {detail}")


class NonMonotonicTimestamp(DataError):
    def __init__(self, row, detail="not strictly increasing / equally spaced"):
        self.row = row
        super().__init__(f"timestamp at row {row}: {detail}")


class ConstantColumn(DataError):
    def __init__(self, col):
        self.col = col
        super().__init__(f"column {col!r} is constant on the training split")


class SeriesTooShort(DataError):
    """Series shorter than one full window (or split segment)."""


class CheckpointError(DataError):
    """Base for checkpoint container problems."""


class CorruptCheckpoint(CheckpointError):
    """Truncated file, bad magic, or inconsistent record lengths."""


class FormatVersionMismatch(CheckpointError):
    def __init__(self, found, expected):
        self.found, self.expected = found, expected
        super().__init__(f"checkpoint format version {found}, expected {expected}")


# --- numerics -----------------------------------------------------------------


class NumericError(AdpgcnError):
    """Numeric failure during computation."""


class ShapeMismatch(NumericError):
    """Operands do not conform for the requested operation."""


class NodeCountMismatch(ShapeMismatch):
    """Input's dimension axis disagrees with the adjacency's node count."""


class NonFiniteValue(NumericError):
    """A forward computation produced NaN or Inf."""


class NonFiniteLoss(NumericError):
    def __init__(self, epoch, batch, detail=""):
        self.epoch, self.batch = epoch, batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {detail}")


class NotScalarLoss(NumericError):
    """backward() called on a non-scalar tensor."""


class GraphConsumed(NumericError):
    """backward() called twice on the same loss."""
