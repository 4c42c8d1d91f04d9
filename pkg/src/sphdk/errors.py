"""Exception hierarchy. CLI exit codes key off these classes."""


class SphdkError(Exception):
    exit_code = 1


class InvalidArgumentError(SphdkError, ValueError):
    exit_code = 1


class DomainError(InvalidArgumentError):
    pass


class DataError(SphdkError):
    exit_code = 2


class NumericalError(SphdkError, ArithmeticError):
    exit_code = 3


class NotPositiveDefiniteError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, msg: str, iterations: int):
        super().__init__(f"{msg} (after {iterations} iterations)")
        self.iterations = iterations


class DivergenceError(NumericalError):
    def __init__(self, msg: str, epoch: int):
        super().__init__(f"{msg} (epoch {epoch})")
        self.epoch = epoch
