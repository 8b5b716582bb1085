"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DegenerateInputError(ValueError):
    """Input is valid in form but numerically degenerate (e.g. a zero-norm vector)."""


class NondeterminismError(RuntimeError):
    """A computation that must be deterministic returned different results."""


class CheckpointError(ValueError):
    """A checkpoint file is corrupt, truncated, or incompatible."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at byte {position})"
        super().__init__(message)
        self.position = position


class GenerationError(ValueError):
    """The synthetic corpus cannot be generated from the given settings."""


class DatasetError(ValueError):
    """A dataset file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
