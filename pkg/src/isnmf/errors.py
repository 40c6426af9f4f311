"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`IsnmfError`.  The two intermediate classes map onto the CLI exit
codes: :class:`DataError` (bad input files or shapes, exit 3) and
:class:`NumericalError` (a broken numerical invariant, exit 4).
"""


class IsnmfError(Exception):
    exit_code = 1


class DataError(IsnmfError, ValueError):
    exit_code = 3


class NumericalError(IsnmfError, ArithmeticError):
    exit_code = 4


class ShapeMismatch(DataError):
    pass


class NegativeInput(DataError):
    pass


class EmptyDataset(DataError):
    pass


class BadMagic(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class NonFiniteEntry(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class TooShort(DataError):
    pass


class AllSilent(DataError):
    pass


class NonPositiveInit(NumericalError):
    pass


class ZeroColumn(NumericalError):
    pass


class InconsistentStats(NumericalError):
    pass


class DivergedObjective(NumericalError):
    pass
