"""Exception hierarchy shared by the simulator modules."""


class OQBError(Exception):
    """Base class for all errors raised by :mod:`oqb`."""


class StateValidationError(OQBError, ValueError):
    """A matrix is not a valid density matrix or observable."""


class DegenerateHamiltonianError(OQBError, ValueError):
    """The Hamiltonian has no separated ground and excited level."""


class IntegratorError(OQBError, ArithmeticError):
    """Propagation produced a state outside the physical tolerance."""


class ConfigError(OQBError, ValueError):
    """Invalid protocol or run configuration."""
