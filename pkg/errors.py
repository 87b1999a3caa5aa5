"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration, shapes or ranges."""


class NumericError(ArithmeticError):
    """A NaN or infinite value appeared in actions, losses or gradients."""


class CheckpointNotFoundError(FileNotFoundError):
    """A requested checkpoint or iteration does not exist."""


class CheckpointFormatError(ValueError):
    """A checkpoint file failed to decode or its CRC does not match."""


class TraceError(RuntimeError):
    """The environment exposes no positional state to trace."""
