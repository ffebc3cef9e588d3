"""Exception types shared across the simulation engines."""


class SimulationError(Exception):
    """Base class for all errors raised by this package."""


class NoSupportError(SimulationError):
    """A queried point lies outside the support of every wave branch."""


class StepTooLargeError(SimulationError):
    """Integrator step would under-resolve the packet height."""


class BranchCountError(SimulationError):
    """Operation received a wave with an unsupported number of branches."""


class AxisClashError(SimulationError):
    """Stabilizer and destabilizer were given the same Pauli axis."""


class UnsupportedAxisError(SimulationError):
    """Measurement axis matches neither the stabilizer nor the destabilizer."""


class ParseError(SimulationError):
    """Scenario document is malformed."""


class ValidationError(SimulationError):
    """Scenario or chain content violates a model constraint."""
