"""Exception hierarchy; the CLI maps each family to an exit code."""


class ReconetError(Exception):
    exit_code = 1


class ConfigError(ReconetError, ValueError):
    exit_code = 2


class DataError(ReconetError, ValueError):
    exit_code = 3


class ParseError(DataError):
    """Malformed input file."""

    def __init__(self, message, offset=None, row=None):
        where = ""
        if offset is not None:
            where = f" (byte offset {offset})"
        elif row is not None:
            where = f" (row {row})"
        super().__init__(message + where)
        self.offset = offset
        self.row = row


class ScalingError(ParseError):
    pass


class NumericalError(ReconetError, ArithmeticError):
    exit_code = 4
