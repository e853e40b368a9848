"""Exception hierarchy shared by every entm module."""


class EntmError(Exception):
    """Base class for all library errors."""


class ScenarioError(EntmError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class RangeError(ScenarioError):
    """A scenario value lies outside its admissible range."""


class MissingFieldError(ScenarioError):
    """A required scenario field has no default and was not supplied."""


class InfeasibleLinkError(EntmError):
    """Fidelity on arrival is already below threshold (or no positive d_max exists)."""


class NoRootInBracketError(EntmError):
    pass


class NotAchievableError(EntmError):
    pass


class EmptySpaceError(EntmError):
    pass


class UnknownDistanceError(EntmError, KeyError):
    pass


class DimensionMismatchError(EntmError, ValueError):
    pass


class NotConvergedError(EntmError):
    def __init__(self, iterations, residual):
        super().__init__(
            f"steady state not reached after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class DegenerateGenerationError(EntmError):
    """p' = 0: a request that finds no link waits forever."""


class MissingFixtureError(EntmError, FileNotFoundError):
    pass
