"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument violates an operation's mathematical domain."""


class NumericError(ArithmeticError):
    """A computation produced non-finite or otherwise unusable values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""


class ProtocolError(RuntimeError):
    """The external-predictor wire protocol was violated."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it, ``__cause__`` says why.

    Artifacts written by earlier stages are left in place for inspection.
    """

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
