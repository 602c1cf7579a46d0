"""Exception types shared across the toolkit."""


class SeaError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SeaError, ValueError):
    """Invalid parameters or configuration file."""


class DomainError(SeaError, ValueError):
    pass


class SpringOverload(SeaError):
    """Spring torque exceeded its rated limit."""


class NumericalDivergence(SeaError):
    """Integrator state became non-finite."""


class UpsampleRequested(SeaError, ValueError):
    pass


class InsufficientData(SeaError):
    pass


class ZeroInputPower(SeaError):
    pass


class EmptyBode(SeaError, ValueError):
    pass


class FitFailed(SeaError):
    pass


class EmptyCurve(SeaError, ValueError):
    pass


class InsufficientPoints(SeaError, ValueError):
    pass


class CsvFormatError(SeaError, ValueError):
    """CSV file does not match its declared schema."""
