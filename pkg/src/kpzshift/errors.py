"""Exception types shared by the numerical modules."""


class RangeError(ValueError):
    """Argument outside the validated evaluation window."""


class AccuracyError(ArithmeticError):
    """A self-convergence check failed (quadrature, contour, truncation)."""


class DivergenceError(ArithmeticError):
    """A series failed to converge within its term budget."""


class SimulationError(RuntimeError):
    """A replica failed; carries the run index."""

    def __init__(self, run, message):
        super().__init__(f"run {run}: {message}")
        self.run = run
