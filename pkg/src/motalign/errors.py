"""Exception hierarchy shared by every subsystem.

The CLI maps these onto exit codes: configuration problems exit 2,
data/format problems exit 3, numerical failures exit 4.
"""


class MotalignError(Exception):
    exit_code = 1


class ConfigError(MotalignError, ValueError):
    exit_code = 2


class DimensionError(MotalignError, ValueError):
    exit_code = 2


class ContractError(MotalignError, ValueError):
    exit_code = 2


class DegenerateInputError(MotalignError, ValueError):
    exit_code = 4


class NotPSDError(MotalignError, ValueError):
    exit_code = 4


class NumericalError(MotalignError, ArithmeticError):
    exit_code = 4


class FormatError(MotalignError, ValueError):
    exit_code = 3


class CorruptionError(FormatError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (offset {offset})")
        self.offset = offset
