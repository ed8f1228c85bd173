"""Exception types; the CLI maps them onto exit codes."""


class FwdWickError(Exception):
    """Base class for all package errors."""


class ConfigError(FwdWickError, ValueError):
    """Invalid configuration or precondition violation (exit code 2)."""


class DomainError(ConfigError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(FwdWickError, ValueError):
    """Arrays whose sizes do not match the grid."""


class BudgetError(FwdWickError):
    """A numerical budget (tail bound, table size) is exceeded (exit code 3)."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class ContractError(FwdWickError, ValueError):
    """Caller did not supply the data an operation requires."""


class OracleLimitError(FwdWickError, ValueError):
    """Chaos oracle size or order limits exceeded."""
