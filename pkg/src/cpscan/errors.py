"""Exception hierarchy shared by all cpscan modules."""


class CPScanError(Exception):
    """Base class for every error raised by cpscan."""


class FormatError(CPScanError, ValueError):
    """A file could not be parsed as the expected raster/point-cloud format."""


class MalformedHeaderError(FormatError):
    pass


class SizeOverflowError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class ConfigError(CPScanError, ValueError):
    """A configuration document is missing fields or violates an invariant."""


class NumericalError(CPScanError, ArithmeticError):
    """A numerical procedure failed (degenerate input, non-convergence, ...)."""


class DegenerateConfigurationError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass
