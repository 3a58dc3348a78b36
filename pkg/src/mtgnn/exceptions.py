class MtgnnError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MtgnnError, ValueError):
    pass


class LengthError(MtgnnError, ValueError):
    pass


class ConfigError(MtgnnError, ValueError):
    pass


class ContractError(MtgnnError, RuntimeError):
    pass


class MissingInputError(MtgnnError, ValueError):
    pass


class ParseError(MtgnnError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(MtgnnError, RuntimeError):
    pass


class CheckpointError(MtgnnError, IOError):
    pass


class ReceptiveFieldError(LengthError, ConfigError):
    """Configured input window is shorter than the receptive field of the stack."""
