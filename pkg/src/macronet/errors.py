"""Exception types shared across the package."""


class MacroNetError(Exception):
    """Base class for all package errors."""


class DimensionError(MacroNetError):
    """Array shapes or widths are inconsistent with the operation."""


class ContractError(MacroNetError):
    """A documented precondition was violated by the caller."""


class NumericError(MacroNetError):
    """A non-finite value was produced or supplied."""


class DivergenceError(NumericError):
    """Training produced non-finite losses, gradients, or parameters."""


class IntegrationError(NumericError):
    """A simulated field left its invariant bounds."""


class DataFormatError(MacroNetError):
    """A serialized file is malformed, truncated, or version-incompatible."""
