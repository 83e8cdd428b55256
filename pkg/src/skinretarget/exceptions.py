"""Exception hierarchy shared by every module of the package."""


class RetargetError(Exception):
    """Base class for all package errors."""


class ContractError(RetargetError, ValueError):
    """An input violates a documented precondition."""


class ShapeError(ContractError):
    """Array or sequence dimensions do not agree."""


class DegenerateError(ContractError):
    """Input is geometrically degenerate (zero-norm quaternion, flat skeleton)."""


class WeightError(ContractError):
    """Skinning weights are malformed."""


class SegmentationError(ContractError):
    """Limb segmentation produced an empty or overlapping set."""


class SamplingError(ContractError):
    """A vertex set could not be sampled."""


class IndexBuildError(ContractError):
    """A proximity index could not be built."""


class NumericError(RetargetError, ArithmeticError):
    """A computation produced non-finite values."""


class DivergenceError(RetargetError):
    """Optimization diverged. The partial report is attached as ``report``."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ParseError(RetargetError, ValueError):
    """Malformed input file. ``line`` is 1-based, or None when not applicable."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
