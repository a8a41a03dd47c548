"""Exception hierarchy shared across the simulator."""


class ArgusError(Exception):
    """Base class for all simulator errors."""


class InvalidArgumentError(ArgusError, ValueError):
    """An argument violates a documented precondition."""


class PreconditionError(ArgusError):
    """An operation was invoked in a state it does not accept."""


class GenerationError(ArgusError):
    """Random generation failed to produce a valid object (e.g. connectivity)."""


class StalenessError(ArgusError):
    """A required cached neighbor value is missing."""


class NumericError(ArgusError):
    """A numeric evaluation produced a non-finite value."""

    def __init__(self, message: str, coordinate: int | None = None):
        super().__init__(message)
        self.coordinate = coordinate


class DivergenceError(ArgusError):
    """Iterates left the finite range; carries where it happened."""

    def __init__(self, message: str, iteration: int | None = None, agent: int | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.agent = agent


class ConsistencyError(ArgusError):
    """Internal bookkeeping invariant violated (multiplier/plane misalignment)."""


class ConfigError(ArgusError):
    """Configuration failed validation; carries all diagnostics at once."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = list(problems)
