"""Exception types raised across the package."""


class EfclustError(Exception):
    """Base class for all errors raised by efclust."""


class DataFormatError(EfclustError):
    """Malformed input data (CSV structure, duplicated ids, bad grids)."""


class TooShortError(EfclustError):
    """A unit has fewer than two observations and cannot be standardized."""

    def __init__(self, unit_id: str):
        self.unit_id = unit_id
        super().__init__(f"unit {unit_id!r} has fewer than 2 observations")


class ZeroVarianceError(EfclustError):
    """A unit's values are constant, so it has no scale to standardize by."""

    def __init__(self, unit_id: str):
        self.unit_id = unit_id
        super().__init__(f"unit {unit_id!r} has constant values (zero variance)")


class ConfigError(EfclustError):
    """A model configuration violates one of its invariants."""


class NotPositiveDefiniteError(ConfigError):
    def __init__(self, class_index: int):
        self.class_index = class_index
        super().__init__(
            f"prior_cov of class {class_index} is not symmetric positive-definite"
        )


class DimensionMismatchError(ConfigError):
    def __init__(self, class_index: int, expected: int, got: int):
        self.class_index = class_index
        self.expected = expected
        self.got = got
        super().__init__(
            f"class {class_index}: prior_mean has length {got}, "
            f"but the basis has dimension {expected}"
        )


class OutOfSupportError(EfclustError):
    """A spline basis was evaluated outside its boundary interval."""

    def __init__(self, t: float, detail: str = ""):
        self.t = t
        msg = f"t={t!r} is outside the spline support"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class InconsistentStateError(EfclustError):
    """An urn state does not match the model configuration."""


class NonFiniteLogWeightError(EfclustError):
    """A responsibility log-weight evaluated to NaN or infinity."""


class SingularSystemError(EfclustError):
    """A coefficient-update linear system could not be factorized."""


class NonFiniteElboError(EfclustError):
    """The evidence lower bound evaluated to NaN or infinity."""


class LengthMismatchError(EfclustError):
    """Two label sequences that must align have different lengths."""


class MissingVolumesError(EfclustError):
    """Volume totals were requested but the dataset carries no volumes."""
