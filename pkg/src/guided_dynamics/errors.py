"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    pass


class InvalidActionError(InvalidInputError):
    pass


class NumericError(FloatingPointError):
    """Non-finite value encountered; ``where`` names the particle or layer."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


class DivergenceError(RuntimeError):
    pass


class PlanningError(RuntimeError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DegenerateSpringWarning(RuntimeWarning):
    """Two connected particles coincide; their spring force is set to zero."""
