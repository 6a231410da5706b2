"""Exception and warning types shared across the package."""


class PulogitError(Exception):
    """Base class for all library-specific errors."""


class DimensionMismatch(PulogitError, ValueError):
    """Array shapes are inconsistent with each other or with the model."""


class LengthMismatch(DimensionMismatch):
    """Two vectors that must align have different lengths."""


class IndexOutOfRange(PulogitError, ValueError):
    """A group index points outside the penalized parameter space."""


class NotIncreasing(PulogitError, ValueError):
    """Ordinal cut-points must be strictly increasing."""


class NonPositiveProbability(PulogitError, ValueError):
    """An ordinal class probability is not strictly positive."""


class NonFinite(PulogitError, ArithmeticError):
    """An objective or gradient became NaN/inf (data or scale pathology)."""


class InvalidConfig(PulogitError, ValueError):
    """A simulation or solver configuration violates its invariants."""


class InvalidRegion(PulogitError, ValueError):
    """Theory-diagnostic inputs fall outside the admissible region."""


class InvalidPlan(PulogitError, ValueError):
    """A cross-validation plan violates its invariants."""


class RejectionStall(PulogitError, RuntimeError):
    """Case-control rejection sampling cannot find a class (prevalence ~ 0)."""


class LabelOutOfRange(PulogitError, ValueError):
    """An observed label lies outside {0, ..., K}."""


class ParseError(PulogitError, ValueError):
    """A data file could not be parsed; message names the row/column."""


class NonNumericCovariate(ParseError):
    """A covariate cell is not a number; message names the row/column."""


class DegenerateWarning(UserWarning):
    """A degenerate configuration was detected and a fallback was used."""


class EmptyClassWarning(UserWarning):
    """A positive class has zero labeled rows; the fit proceeds regardless."""
