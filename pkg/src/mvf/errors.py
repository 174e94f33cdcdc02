"""Exception hierarchy shared by every module of the package."""


class MvfError(Exception):
    """Base class for all errors raised by ``mvf``."""


class InvalidInput(MvfError, ValueError):
    """An argument violates a documented precondition."""


class NotPositiveDefinite(InvalidInput):
    """A matrix required to be positive definite is not."""


class Unsupported(MvfError, NotImplementedError):
    """The requested dimension or variant is not implemented."""


class InvalidRhs(InvalidInput):
    """Right-hand side outside the regime where the operator is defined."""


class InvalidControl(MvfError):
    """A strategy returned a control that is not in its family."""


class InvalidWindow(MvfError):
    """A time window reaches before the first available time level."""


class OutOfDomain(MvfError):
    """A stencil node left the sampled region of a grid function."""

    def __init__(self, x, node=None, message=None):
        self.x = x
        self.node = node
        if message is None:
            message = f"stencil point {node!r} (centre {x!r}) is outside the grid"
        super().__init__(message)


class Diverged(MvfError):
    """A marched value blew up; ``location`` holds (node, time)."""

    def __init__(self, location, value):
        self.location = location
        self.value = value
        super().__init__(f"value {value!r} exceeded the divergence bound at {location!r}")
