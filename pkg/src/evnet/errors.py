"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An input violates a documented invariant."""


class SingularChainError(RuntimeError):
    """The balance equations of a station chain have no unique solution."""


class InfeasibleError(RuntimeError):
    """No admissible rate or allocation satisfies the QoS constraints."""
