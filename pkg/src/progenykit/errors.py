"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """A numerical precondition failed (negative discriminant, no admissible root, ...)."""


class ConvergenceError(RuntimeError):
    """An iteration exhausted its budget before reaching the requested tolerance.

    The last iterate and the number of iterations performed are kept so callers
    can report partial results.
    """

    def __init__(self, message, last=None, iterations=0, change=float("nan")):
        super().__init__(message)
        self.last = last
        self.iterations = iterations
        self.change = change


class SpecError(ValueError):
    """Malformed walk or model descriptor."""


class HonestyWarning(UserWarning):
    """The requested law is defective (mass escapes to infinity)."""
