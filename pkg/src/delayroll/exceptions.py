"""Exception types raised by delayroll."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class DivergenceError(NumericalError):
    """An integration, rollout or training run produced non-finite values.

    Parameters
    ----------
    message : str
        Human readable description.
    stage : str, optional
        Pipeline stage that diverged (``"integration"``, ``"rollout"``,
        ``"training"``...).
    step : int, optional
        Step index at which divergence was detected.
    """

    def __init__(self, message, stage=None, step=None):
        super().__init__(message)
        self.stage = stage
        self.step = step


class ParseError(ValueError):
    """Malformed trajectory or config file."""
