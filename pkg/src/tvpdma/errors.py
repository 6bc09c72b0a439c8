"""Exception hierarchy. Each class maps to one CLI exit code."""


class DmaError(Exception):
    exit_code = 1


class ConfigError(DmaError, ValueError):
    exit_code = 2


class DataError(DmaError, ValueError):
    exit_code = 3


class CapacityError(DmaError):
    exit_code = 4


class NumericError(DmaError, ArithmeticError):
    exit_code = 5
