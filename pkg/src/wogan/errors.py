"""Exception types raised across the package."""


class WoganError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateInput(WoganError, ValueError):
    pass


class InvalidRoad(WoganError, ValueError):
    """A road failed validation and cannot be executed."""

    def __init__(self, violations=()):
        self.violations = list(violations)
        super().__init__("invalid road: " + (", ".join(self.violations) or "unknown"))


class EndOfRoad(WoganError):
    """No lookahead point remains; the drive is complete."""


class DimensionMismatch(WoganError, ValueError):
    pass


class EmptyBatch(WoganError, ValueError):
    pass


class EmptyData(WoganError, ValueError):
    pass


class EmptyArchive(WoganError, ValueError):
    pass


class EmptySuite(WoganError, ValueError):
    pass


class EmptyGroup(WoganError, ValueError):
    pass


class NoValidCandidate(WoganError, RuntimeError):
    pass


class BudgetTooSmall(WoganError, ValueError):
    pass


class TooShort(WoganError, ValueError):
    pass


class ConfigError(WoganError, ValueError):
    """Bad configuration value; the message names the offending field."""


class SchemaMismatch(WoganError, ValueError):
    pass
