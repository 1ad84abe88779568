"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class PreconditionError(ValueError):
    """A caller-side contract (e.g. unit norm of an iterate) is violated."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Carries the best residual seen so the caller can decide whether the
    partial answer is still usable.
    """

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


class DivergenceError(RuntimeError):
    """An optimizer state became non-finite; ``step`` records when."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step
