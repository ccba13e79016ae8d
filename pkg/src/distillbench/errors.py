"""Exception types shared across the package."""


class DistillBenchError(Exception):
    pass


class DimensionError(DistillBenchError, ValueError):
    """Operand shapes do not fit the operation."""


class DomainError(DistillBenchError, ValueError):
    """An argument lies outside the operation's mathematical domain."""


class ContractError(DistillBenchError, ValueError):
    """A caller broke a documented precondition."""


class NonFiniteError(DistillBenchError, FloatingPointError):
    """An operation produced NaN or infinity."""


class DivergenceError(DistillBenchError):
    """Training loss became non-finite."""

    def __init__(self, step: int, lr: float, detail: str = ""):
        self.step = step
        self.lr = lr
        msg = f"training diverged at step {step} (lr={lr:.6g})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class ConfigError(DistillBenchError):
    """An experiment config could not be parsed or validated."""
