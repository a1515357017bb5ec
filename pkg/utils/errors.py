"""
Exception hierarchy shared by every package.

``exit_code`` is what the command line returns when the error reaches it.
"""


class MilError(Exception):
    exit_code: int = 1


class ConfigError(MilError, ValueError):
    exit_code = 2


class DataError(MilError, ValueError):
    exit_code = 3


class DimensionError(DataError):
    pass


class EmptyBagError(DataError):
    pass


class DegenerateDatasetError(DataError):
    pass


class DegenerateLabelsError(DataError):
    pass


class InputError(DataError):
    pass


class SizeError(DataError):
    pass


class RangeError(DataError):
    pass


class FormatError(DataError):
    pass


class EmptyMaskError(DataError):
    pass


class UnsupportedModelError(DataError):
    pass


class NumericError(MilError, ArithmeticError):
    exit_code = 3


class StateError(MilError, RuntimeError):
    pass


class VerificationError(MilError):
    exit_code = 4
