"""Exception types shared across the package."""


class EbsurvError(Exception):
    """Base class for package-specific errors."""


class ShapeError(EbsurvError, ValueError):
    """Array or configuration dimensions do not line up."""


class NonFiniteError(EbsurvError, ArithmeticError):
    """A computation produced NaN or infinity; the message names the step."""


class OutOfSupportError(EbsurvError, ValueError):
    """A time query outside the modeled support, or a record beyond it."""


class DataFormatError(EbsurvError, ValueError):
    """A dataset or model file failed validation."""


class DegenerateRocError(EbsurvError, ValueError):
    """ROC evaluation requested but one outcome class is empty."""
