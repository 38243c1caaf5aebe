class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class InfeasibleError(ValueError):
    """The requested equation has no root for the given inputs."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced a non-finite value."""
