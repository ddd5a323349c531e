class FsgdError(Exception):
    """Base class for library errors."""


class DomainError(FsgdError, ValueError):
    """A covariate or basis index lies outside its domain."""


class DimensionError(FsgdError, ValueError):
    """Covariate vector length does not match the model dimension."""


class DivergenceError(FsgdError, ArithmeticError):
    """An update produced a non-finite coefficient.

    ``step`` is the 1-based index of the offending observation.
    """

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        msg = f"non-finite update at step {step}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class CheckpointError(FsgdError, ValueError):
    """Malformed or incompatible checkpoint file."""
