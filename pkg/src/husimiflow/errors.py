"""Exception types raised by husimiflow."""


class HusimiFlowError(Exception):
    """Base class for all package errors."""


class NonFiniteError(HusimiFlowError):
    """A characteristic left the finite range during integration."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class NoReturnError(HusimiFlowError):
    """No return to the Poincare section within the search horizon."""


class LeakageExceededError(HusimiFlowError):
    """Population in the top Fock levels exceeds the allowed fraction."""

    def __init__(self, message, leakage=None, time=None):
        super().__init__(message)
        self.leakage = leakage
        self.time = time


class ZeroNormError(HusimiFlowError):
    pass


class AllInvalidError(HusimiFlowError):
    pass


class FieldFormatError(HusimiFlowError):
    """Base class for HGRD read failures."""


class MalformedHeaderError(FieldFormatError):
    pass


class UnsupportedVersionError(FieldFormatError):
    pass


class ChecksumMismatchError(FieldFormatError):
    pass


class DimensionOverflowError(FieldFormatError):
    pass


class ConfigError(HusimiFlowError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
