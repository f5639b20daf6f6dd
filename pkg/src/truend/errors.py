"""Exception hierarchy.

Data errors describe bad input (exit code 2 on the command line); computation
errors describe inputs that are valid but leave a quantity undefined (exit
code 3).
"""


class TruEndError(Exception):
    """Base class for every error raised by this package."""


class DataError(TruEndError, ValueError):
    pass


class ComputationError(TruEndError, ArithmeticError):
    pass


class _RowError(DataError):
    def __init__(self, message, loan_id=None, row=None):
        self.loan_id = loan_id
        self.row = row
        where = []
        if loan_id is not None:
            where.append(f"loan_id={loan_id}")
        if row is not None:
            where.append(f"row={row}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class MissingColumn(DataError):
    pass


class NonContiguousHistory(_RowError):
    pass


class DuplicateRecord(_RowError):
    pass


class UnparseableRow(_RowError):
    pass


class NegativeBalance(_RowError):
    pass


class SampleTooLarge(DataError):
    pass


class MismatchedPortfolios(DataError):
    pass


class LoanSetMismatch(DataError):
    pass


class GridMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class InvalidParams(DataError):
    pass


class NotWrittenOff(DataError):
    pass


class UndefinedForNonTzb(ComputationError):
    pass


class EmptyWindow(ComputationError):
    pass


class DegenerateDenominator(ComputationError, ZeroDivisionError):
    pass


class UndefinedEndpoint(ComputationError):
    pass


class NoDefinedObjective(ComputationError):
    pass
