"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class OntoEAError(Exception):
    exit_code = 1


class ConfigError(OntoEAError, ValueError):
    exit_code = 1


class DataError(OntoEAError, ValueError):
    exit_code = 2


class NumericalError(OntoEAError, ArithmeticError):
    exit_code = 3
