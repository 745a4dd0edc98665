"""Exception hierarchy shared by the library, the CLI and the HTTP API."""
from typing import Optional


class FusionError(Exception):
    exit_code = 1


class DataError(FusionError):
    """Input data is malformed or violates a precondition."""

    exit_code = 2


class ConfigError(FusionError):
    """An option or hyper-parameter is invalid."""

    exit_code = 3


class WeakLearnerRejected(FusionError):
    """A boosting round did no better than chance on the weighted training set."""

    def __init__(self, epsilon: float, iteration: Optional[int] = None) -> None:
        self.epsilon = epsilon
        self.iteration = iteration
        where = f' at round {iteration}' if iteration is not None else ''
        super().__init__(f'weak learner no better than chance{where} (epsilon={epsilon:.6f})')
