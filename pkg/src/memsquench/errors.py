"""Exception types raised across the package."""


class MemsError(Exception):
    """Base class for all package errors."""


class ConfigError(MemsError, ValueError):
    """Invalid problem or run configuration."""


class SingularStateError(MemsError):
    """A state has 1 - u <= 0 (or too close to it) somewhere."""


class MeshTanglingError(MemsError):
    """Mesh nodes are not strictly increasing."""


class QuadratureError(MemsError, ValueError):
    pass


class ShootingError(MemsError):
    """The steady-state shooting IVP failed to produce a zero crossing."""


class FoldNotBracketedError(MemsError):
    pass


class IntegratorError(MemsError):
    """Hard failure of the time integrator.

    ``last_state`` holds the last accepted state, when there is one.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class InsufficientSamplesError(MemsError, ValueError):
    pass


class WindowEmptyError(MemsError, ValueError):
    pass
