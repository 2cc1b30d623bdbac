"""Exception hierarchy shared by all engines."""


class QCollapseError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(QCollapseError, ValueError):
    """An argument is out of range or non-finite."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class BoundaryError(QCollapseError):
    """The wavefunction is not negligible at the edge of the grid."""


class NormalizationError(QCollapseError):
    """A grid state that should have unit norm does not."""


class NonNormalizableError(QCollapseError, ValueError):
    """A Gaussian width parameter with Re(omega) >= 0 was supplied."""


class NoStationaryLimitError(QCollapseError, ValueError):
    """The unobserved free or unstable case has no stationary width."""


class SingularityError(QCollapseError, ArithmeticError):
    """Closed-form Riccati solution hit a pole."""


class InstabilityError(QCollapseError, ArithmeticError):
    """A time-stepping loop diverged.

    ``step`` is the index of the step that failed.
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class DegenerateSupportError(QCollapseError):
    """Too few grid nodes carry amplitude to fit a Gaussian."""
