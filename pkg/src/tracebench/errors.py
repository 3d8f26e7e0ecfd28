"""Exception types shared across the package."""


class TraceBenchError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(TraceBenchError):
    """An operation received arguments that violate its preconditions."""


class InvalidConfig(TraceBenchError):
    """A configuration value is out of range or inconsistent."""


class InvalidGrammar(TraceBenchError):
    """A family grammar references tokens outside its declared vocabulary."""


class InvalidState(TraceBenchError):
    """An operation was called before its required state existed."""


class ShapeError(TraceBenchError):
    """Tensor operands have incompatible shapes."""


class KernelOverflow(TraceBenchError):
    """Substructure enumeration exceeded its safety budget."""


class AugmentError(TraceBenchError):
    """The external augmentation endpoint failed after all retries."""


class ConfigError(TraceBenchError):
    """A benchmark configuration file is invalid; message names the key."""
