"""Exception types shared across the package."""


class ThzNomaError(Exception):
    """Base class for all package errors."""


class RankDeficient(ThzNomaError, ArithmeticError):
    pass


class OutOfRange(ThzNomaError, IndexError):
    pass


class UnsupportedOrder(ThzNomaError, ValueError):
    pass


class LengthMismatch(ThzNomaError, ValueError):
    pass


class DimensionMismatch(ThzNomaError, ValueError):
    pass


class InvalidArgument(ThzNomaError, ValueError):
    pass


class SearchSpaceTooLarge(ThzNomaError, ValueError):
    pass


class PatternExplosion(ThzNomaError, ValueError):
    pass


class EmptyDrop(ThzNomaError):
    """Raised when a user drop produces no users in one of the disks."""


class BudgetExhausted(ThzNomaError):
    """Raised when the near user's channel-inversion power eats the whole per-SA budget."""


class UnknownMode(ThzNomaError, ValueError):
    pass


class ConfigError(ThzNomaError, ValueError):
    """Configuration problem; ``field`` names the offending key when known."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
