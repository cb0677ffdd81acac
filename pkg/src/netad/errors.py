"""Exception types shared across the package."""


class NetadError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(NetadError):
    """A KDD record line could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None, column: str | None = None):
        self.line_no = line_no
        self.column = column
        prefix = ""
        if line_no is not None:
            prefix += f"line {line_no}: "
        if column is not None:
            prefix += f"column '{column}': "
        super().__init__(prefix + message)


class WrongFieldCount(ParseError):
    pass


class NonNumericField(ParseError):
    pass


class UnknownLabel(ParseError):
    pass


class UnseenCategory(NetadError):
    """A categorical token absent from the training vocabulary (strict mode)."""


class ShapeMismatch(NetadError):
    pass


class KernelTooWide(ShapeMismatch):
    pass


class DimensionMismatch(NetadError):
    pass


class KTooLarge(NetadError):
    pass


class CalledBeforeForward(NetadError):
    pass


class EmptyTrainingSet(NetadError):
    pass


class DivergenceDetected(NetadError):
    """Training loss became NaN/Inf."""


class LengthMismatch(NetadError):
    pass


class CodeOutOfRange(NetadError):
    pass


class EmptyMatrix(NetadError):
    pass


class BundleError(NetadError):
    """A model bundle is missing, corrupt, or inconsistent."""


class ConfigError(NetadError):
    """Bad run configuration (unknown key, bad value)."""
