"""Error hierarchy shared by services and commands."""


class SpriteImputerError(Exception):
    """Base class for every error raised on purpose by this package."""


class ContractViolationError(SpriteImputerError, ValueError):
    """A caller broke an operation's precondition (bad slot set, shape, domain...)."""


class ImageTooLargeError(SpriteImputerError, ValueError):
    """An input raster exceeds the 64x64 canvas; images are never downscaled."""


class ImageReadError(SpriteImputerError, ValueError):
    """An image file could not be read or is not a PNG."""


class DatasetError(SpriteImputerError, ValueError):
    pass


class ConfigError(SpriteImputerError, ValueError):
    """Invalid run configuration. The message names the offending field."""


class WeightContainerError(SpriteImputerError, ValueError):
    """Corrupt, truncated, mismatched or wrong-version weight container."""


class RunDirectoryLockedError(SpriteImputerError, RuntimeError):
    pass


class NonFiniteLossError(SpriteImputerError, RuntimeError):
    """A loss term became NaN or infinite during a training step."""

    def __init__(self, term: str, step: int, values: dict):
        self.term = term
        self.step = step
        self.values = values
        super().__init__(f"Non-finite loss term '{term}' at step {step}: {values}")
