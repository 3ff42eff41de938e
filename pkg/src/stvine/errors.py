"""Exception hierarchy for the stvine package."""


class StvineError(Exception):
    """Base class for all package errors."""


class SchemaError(StvineError):
    """Input file violates its declared schema (shape, ordering, header)."""


class ParseError(SchemaError):
    """A row failed to parse; message carries the offending line number."""


class UnknownStationError(StvineError):
    """An observation references a station id absent from the station list."""


class InsufficientDataError(StvineError):
    """Too little data remains to proceed (filters, folds, fits)."""


class ImputationError(StvineError):
    """A time slice cannot be imputed; message identifies the slice."""


class FitError(StvineError):
    """A maximum-likelihood or least-squares fit failed."""


class DomainError(StvineError):
    """Argument or parameter outside the admissible range."""


class TauRangeError(DomainError):
    """Kendall's tau outside the attainable range of a copula family."""


class NumericError(StvineError):
    """An iterative numeric routine failed to converge."""


class BoundaryError(StvineError):
    """Target at the time-axis boundary has no lag-1 neighbors."""


class DegenerateDensityError(StvineError):
    """Conditional density normalization collapsed below tolerance."""


class RebinError(StvineError):
    """A spatial bin ended up empty; fewer bins are needed."""
