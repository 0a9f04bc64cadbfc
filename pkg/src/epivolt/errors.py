class InvalidParameterError(ValueError):
    """Raised when a model or solver parameter is outside its domain."""


class SolverError(RuntimeError):
    """Raised when a numerical procedure fails to converge."""


class ConfigError(ValueError):
    """Malformed or semantically invalid experiment configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
