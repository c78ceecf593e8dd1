"""Exception hierarchy shared across the package."""


class FtsoError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FtsoError):
    """Operand shapes violate a primitive's shape rule."""


class NumericalError(FtsoError):
    """A forward/backward pass or a search step produced non-finite values."""


class DataError(FtsoError):
    """A dataset source (IDX/CSV/table file) is malformed or inconsistent."""


class ConfigError(FtsoError):
    """An experiment configuration is malformed or self-contradictory."""


class GenotypeError(FtsoError):
    """A genotype (in memory or text form) violates the architecture grammar."""
