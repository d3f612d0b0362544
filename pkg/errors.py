"""Exception types shared by the hashing pipeline."""


class HashingError(Exception):
    pass


class CorpusFormatError(HashingError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class EmptyCorpusError(HashingError, ValueError):
    pass


class ConfigError(HashingError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class SelectionError(HashingError, ValueError):
    pass


class ModelFileError(HashingError, FileNotFoundError):
    def __init__(self, path, message="model file not found"):
        self.path = str(path)
        super().__init__(f"{message}: {self.path}")


class StageError(HashingError):
    """Raised by the pipeline when a stage fails; carries the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
