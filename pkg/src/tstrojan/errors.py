"""Exception types shared across the toolkit."""


class ParseError(ValueError):
    """A dataset file could not be parsed. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvalidDataset(ValueError):
    """A dataset violates a structural requirement (empty, single class, ...)."""


class InvalidArgument(ValueError):
    """An argument is outside an operation's domain."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, malformed, or inconsistent with expectations."""


class TrainingError(RuntimeError):
    """Training diverged. Carries the epoch at which the loss became non-finite."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message if epoch is None else f"epoch {epoch}: {message}")
        self.epoch = epoch


class DefenseError(RuntimeError):
    """Unlearning diverged despite gradient clipping."""


class ConfigError(ValueError):
    """A run configuration is malformed. Carries the offending field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
