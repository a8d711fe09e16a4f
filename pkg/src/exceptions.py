"""Error types raised across the queue lab."""


class QueueLabError(Exception):
    """Base class for every error the lab raises on purpose"""


class ConfigError(QueueLabError, ValueError):
    """Invalid experiment configuration or model parameter.

    Carries one message per offending field so the CLI can report them all at once.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SimulationError(QueueLabError, RuntimeError):
    """The queue cannot make progress (e.g. zero demand)"""


class EstimatorError(QueueLabError, RuntimeError):
    """The gradient estimator has no data to average"""


class OracleError(QueueLabError, RuntimeError):
    """A closed-form reference is unavailable or undefined for the request"""


class DivergenceError(QueueLabError, RuntimeError):
    """A policy coordinate became non-finite"""
