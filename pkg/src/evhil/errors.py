"""Exception hierarchy.

The CLI maps the three top-level families onto exit codes:
``ConfigError`` -> 1, ``NumericalError`` -> 2, ``ControllerFault`` -> 3.
"""


class EvHilError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(EvHilError, ValueError):
    """Invalid or out-of-range model parameter."""


class ConfigError(EvHilError):
    """Bad scenario configuration, CLI flag or input file."""


class ScenarioError(ConfigError):
    """Request outside the span of a scenario (e.g. time out of range)."""


class NumericalError(EvHilError):
    pass


class IntegrationError(NumericalError):
    pass


class DiscretizationError(NumericalError):
    pass


class MarginsUndefined(NumericalError):
    """Loop never crosses unity gain, so margins have no meaning."""


class DivergenceError(NumericalError):
    """Power flow did not converge.

    ``mismatch`` carries the last voltage update (pu); ``t`` is set by the
    orchestrator when the failure happens inside a scenario.
    """

    def __init__(self, message, mismatch=float("nan"), iterations=0, t=None):
        super().__init__(message)
        self.mismatch = mismatch
        self.iterations = iterations
        self.t = t


class TopologyError(ParameterError):
    """Feeder is not a tree rooted at the slack bus."""


class UnsupportedQuadrant(ParameterError):
    pass


class SingularVoltage(ParameterError):
    pass


class SequencingError(EvHilError):
    """Timestamps fed to a stateful block went backwards."""


class ThresholdUnavailable(EvHilError):
    pass


class ControllerFault(EvHilError):
    """Charger control tripped (non-finite measurement, persistent saturation)."""

    def __init__(self, message, t=None, context=None):
        super().__init__(message)
        self.t = t
        self.context = dict(context or {})
