"""Exception and warning types shared across the package."""


class KoopinvError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(KoopinvError, ValueError):
    """An argument violates a documented precondition."""


class DivergenceError(KoopinvError, ArithmeticError):
    """Integration left the overflow guard."""

    def __init__(self, time, norm):
        self.time = float(time)
        self.norm = float(norm)
        super().__init__(f"state norm {norm:.3g} exceeded the overflow guard at t={time:.6g}")


class DegenerateDataError(KoopinvError, ArithmeticError):
    """Data matrix is identically zero, so the dictionary is unconstrained."""


class UnidentifiableError(KoopinvError, ArithmeticError):
    """Stacked actuation regressor is rank deficient."""

    def __init__(self, rank, required):
        self.rank = int(rank)
        self.required = int(required)
        super().__init__(
            f"actuation regressor has numerical rank {rank} < {required}; "
            "the input signal is not exciting enough"
        )


class UnsupportedError(KoopinvError, NotImplementedError):
    """Operation is not defined for the given dimension or structure."""


class ConvergenceWarning(UserWarning):
    """Iteration stopped at its limit before stabilizing."""


class ConditioningWarning(UserWarning):
    """A least-squares regressor is badly conditioned."""


class UncontrollableWarning(UserWarning):
    """The control gain map vanishes while the tracking error does not."""
