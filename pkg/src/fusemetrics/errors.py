"""Exception and warning types shared across the package."""


class FusemetricsError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(FusemetricsError):
    """Image file uses an encoding we do not read (e.g. 16-bit rasters)."""


class DimensionMismatchError(FusemetricsError):
    """Two images that must share a shape do not."""


class TooSmallError(FusemetricsError):
    """Input dimensions below the minimum an operation requires."""


class RangeError(FusemetricsError):
    """Pixel values or parameters outside their admissible interval."""


class EnvOutOfRangeError(RangeError):
    """Environment weight outside [0, 1]."""


class DegenerateInputError(FusemetricsError):
    """Raised only where a degenerate input cannot produce any score at all."""


class AllDegenerateError(DegenerateInputError):
    """Every analysis window of an image pair was degenerate."""


class TooFewMethodsError(FusemetricsError):
    """Ranking needs at least two methods."""


class NonFiniteScoreError(FusemetricsError):
    """A score column contains NaN or infinity."""


class LengthMismatchError(FusemetricsError):
    """Two rank vectors differ in length."""


class NotAPermutationError(FusemetricsError):
    """A rank vector is not a permutation of 1..L."""


class UnknownColumnError(FusemetricsError):
    """A requested score-table column does not exist."""


class EmptyDatasetError(FusemetricsError):
    """Training was asked to run on no data."""


class NonFiniteLossError(FusemetricsError):
    """Training loss became NaN or infinite."""


class MissingArtifactError(FusemetricsError):
    """A required trained-parameter file is absent."""


class LayoutError(FusemetricsError):
    """Dataset directory does not follow the expected layout."""


class DegenerateInputWarning(UserWarning):
    """A metric received degenerate (e.g. constant) input and reported a
    defined fallback score instead of failing."""
