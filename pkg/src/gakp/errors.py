class GakpError(Exception):
    """Base class for all errors raised by the package."""


class NumericalError(GakpError):
    pass


class InputError(GakpError, ValueError):
    pass


class FormatError(GakpError, ValueError):
    pass
