"""Exception types shared across the package."""


class ModelError(ValueError):
    """A model or input violates a structural requirement."""


class AssumptionError(ModelError):
    """A standing assumption of the method does not hold for the given model."""


class EstimationError(ValueError):
    """A fit or rate estimate cannot be formed from the data supplied."""


class NumericalError(ArithmeticError):
    """A numerical procedure diverged or failed to converge."""


class DivergenceError(NumericalError):
    """The value function is infinite (spectral radius of the discounted kernel >= 1)."""


class CensoredError(NumericalError):
    """Simulated paths hit ``max_steps`` where the algorithm requires termination."""

    def __init__(self, message, count):
        super().__init__(message)
        self.count = count


class ZeroValueWarning(UserWarning):
    """Transient states with zero expected reward (they should be absorbing)."""
