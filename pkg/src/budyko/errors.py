"""Exception hierarchy shared by every module of the package."""


class BudykoError(Exception):
    """Base class for all errors raised by the package."""


class InvalidParams(BudykoError, ValueError):
    """A model parameter lies outside its admissible range."""


class DomainError(BudykoError, ValueError):
    """A function was evaluated outside its domain of definition."""


class ConvergenceError(BudykoError, RuntimeError):
    """An iterative solver exhausted its budget."""


class BracketError(BudykoError, RuntimeError):
    """A root was expected but no sign change could be bracketed."""


class NoBranch(BudykoError, ValueError):
    """The requested equilibrium branch does not exist for these parameters."""


class TransmissionError(BudykoError, ValueError):
    """A candidate free boundary does not satisfy the C1 matching condition."""


class NoHyperbolicRoot(BudykoError):
    """The dispersion function has no positive root, so eta_1 >= omega**2.

    Informational: callers are expected to fall back to the matrix method.
    """


class NumericalBlowup(BudykoError, FloatingPointError):
    """The time stepper produced non-finite values."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class GridError(BudykoError, ValueError):
    """Two fields live on different grids."""


class ShapeViolation(BudykoError, AssertionError):
    """The sampled bifurcation curve is not S-shaped.

    ``pair`` holds the offending pair of lambda values.
    """

    def __init__(self, message, branch=None, pair=None):
        super().__init__(message)
        self.branch = branch
        self.pair = pair
