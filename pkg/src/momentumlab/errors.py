"""Exception hierarchy.

Everything raised on bad user input derives from :class:`InputError` (CLI exit
code 2); broken internal guarantees raise :class:`InvariantViolation` (exit 3).
"""


class MomentumLabError(Exception):
    """Base class for all package errors."""


class InputError(MomentumLabError, ValueError):
    pass


class InvariantViolation(MomentumLabError, AssertionError):
    pass


# ingest
class EmptyFile(InputError):
    pass


class MissingRequiredColumn(InputError):
    def __init__(self, name: str):
        super().__init__(f"missing required column {name!r}")
        self.name = name


class MalformedRow(InputError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class AllColumnsDropped(InputError):
    pass


# features / learners
class DegenerateInput(InputError):
    pass


class ColumnMismatch(InputError):
    pass


class UnknownColumn(InputError):
    def __init__(self, name: str):
        super().__init__(f"unknown column {name!r}")
        self.name = name


class UnknownMetric(InputError):
    pass


class TooFewRows(InputError):
    pass


class LabelOutOfDomain(InputError):
    pass


class EmptyTrainingSet(InputError):
    pass


class LengthMismatch(InputError):
    pass


class NonPositiveAccuracy(InputError):
    pass


# momentum / signals / simlab
class EmptyMatch(InputError):
    pass


class TooShort(InputError):
    pass


class SingleCategory(InputError):
    pass


class DegenerateRuns(InputError):
    pass


class ZeroSpread(InputError):
    pass
