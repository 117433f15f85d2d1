"""Exception types shared across the package."""


class GraphMatchError(Exception):
    """Base class for all graphmatch errors."""


class ShapeError(GraphMatchError, ValueError):
    """Tensor/array dimensions do not satisfy an operation's contract."""


class ContractError(GraphMatchError, ValueError):
    """A precondition was violated (empty input, missing feature stage, ...)."""


class ParameterError(GraphMatchError, ValueError):
    """An operation parameter is out of its valid range."""


class DegenerateBatchError(ContractError):
    """Batch statistics are undefined (batch size < 2 in train mode)."""


class DegenerateSimilarityError(ContractError):
    """Cosine similarity requested against a zero-norm projected vector."""


class DegenerateGeometryError(GraphMatchError, ValueError):
    """Point configuration is rank-deficient (collinear points, singular map)."""


class EstimationFailureError(GraphMatchError, RuntimeError):
    """Robust estimation found no model supported by enough inliers."""


class ResourceLimitError(GraphMatchError, RuntimeError):
    """An output would exceed a configured resource bound."""


class DatasetError(GraphMatchError, RuntimeError):
    """Dataset directory is missing, empty, or malformed."""


class TrainingDivergedError(GraphMatchError, RuntimeError):
    """Training produced a non-finite loss; diagnostics were dumped."""


class CheckpointError(GraphMatchError, RuntimeError):
    """Checkpoint file is malformed or does not match the model."""
