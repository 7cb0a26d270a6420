"""Exception types raised across the package."""


class MmidError(Exception):
    """Base class for all package errors."""


class NumericError(MmidError):
    """Failure of a numerical routine (maps to CLI exit code 3)."""


class NonFiniteInput(NumericError, ValueError):
    pass


class RankDeficient(NumericError):
    pass


class SingularOperator(NumericError):
    pass


class StepSizeUnderflow(NumericError):
    pass


class NonFiniteState(NumericError):
    pass


class DimensionMismatch(MmidError, ValueError):
    pass


class SizeMismatch(MmidError, ValueError):
    pass


class InvalidConfig(MmidError, ValueError):
    pass


class InvalidWeights(MmidError, ValueError):
    pass


class GridOutOfRange(MmidError, ValueError):
    pass


class SamplerFailure(MmidError):
    pass


class ClassifierFailure(MmidError):
    pass


class BasisColumnRequested(MmidError, ValueError):
    pass


class NoMatchingCluster(MmidError):
    """No low-fidelity sample realizes the high-fidelity mode at a basis column."""

    def __init__(self, column: int, label: int):
        self.column = column
        self.label = label
        super().__init__(
            f"no low-fidelity sample of column {column} has cluster label {label}"
        )
