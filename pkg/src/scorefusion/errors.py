"""Exception and warning types shared across the package.

Every error raised by library code derives from ScoreFusionError so callers
can catch one base type. Warnings derive from ScoreFusionWarning and are
emitted through the stdlib warnings machinery.
"""

from __future__ import annotations


class ScoreFusionError(Exception):
    """Base class for all library errors."""


class ConstantColumnError(ScoreFusionError):
    """A score column has standard deviation below 1e-12."""

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"column {column} is constant (sd < 1e-12)")


class NotStandardizedError(ScoreFusionError):
    """An operation required standardized scores but got raw ones."""


class LengthMismatchError(ScoreFusionError):
    """Two aligned containers disagree on length."""


class ZeroVarianceError(ScoreFusionError):
    """A variance that must be positive is (numerically) zero."""


class DegenerateDenominatorError(ScoreFusionError):
    """The structured-weight denominator is within 1e-9 of zero."""


class NotSymmetricError(ScoreFusionError):
    """A matrix that must be symmetric is not (beyond 1e-12)."""


class NonFiniteSpectrumError(ScoreFusionError):
    """Eigenvalues came back NaN or infinite."""


class IndexCollisionError(ScoreFusionError):
    """Quartet indices i, j, k, l are not pairwise distinct."""


class TooFewPredictorsError(ScoreFusionError):
    """An operation needs more predictors than the input provides."""


class InvalidKError(ScoreFusionError):
    """Requested group count is outside 1..M."""


class KTooSmallError(ScoreFusionError):
    """The separation diagnostic requires at least three groups."""


class NoUsableEquationsError(ScoreFusionError):
    """Every correlation pair fell below the magnitude floor."""


class SolverDivergedError(ScoreFusionError):
    """The constrained least-squares solve missed its KKT tolerance."""


class EigenFailureError(ScoreFusionError):
    """An eigendecomposition failed to converge."""


class SvdFailureError(ScoreFusionError):
    """A singular value decomposition failed to converge."""


class NonConvergenceError(ScoreFusionError):
    """An iterative fit hit its iteration cap before its tolerance."""


class TruthUnavailableError(ScoreFusionError):
    """Ground-truth weights were requested without simulation truth."""


class InvalidConfigError(ScoreFusionError):
    """A configuration value is out of range or inconsistent."""


class SingleClassError(ScoreFusionError):
    """Evaluation labels contain only one class."""


class NoPositivesError(ScoreFusionError):
    """Evaluation labels contain no positive examples."""


class TooFewSamplesError(ScoreFusionError):
    """Not enough rows for the requested computation."""


class ParseError(ScoreFusionError):
    """A CSV or JSON input could not be parsed."""


class ScoreFusionWarning(UserWarning):
    """Base class for library warnings."""


class AutoStandardizeWarning(ScoreFusionWarning):
    """Raw scores were standardized on the fly."""


class SampleSizeWarning(ScoreFusionWarning):
    """Fewer samples than predictors; covariance will be noisy."""


class FlatSpectrumWarning(ScoreFusionWarning):
    """All eigenvalue ratios are equal; rank selection is arbitrary."""


class AmbiguousSignsWarning(ScoreFusionWarning):
    """A sign-recovery majority vote tied and was resolved toward positive."""


class DegenerateWeightWarning(ScoreFusionWarning):
    """A weight hit a degenerate denominator and was set to zero."""


class ClippedEigenvalueWarning(ScoreFusionWarning):
    """A negative leading eigenvalue was floored at zero."""
