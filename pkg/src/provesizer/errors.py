"""Exception hierarchy shared by every provesizer module."""


class ProvesizerError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(ProvesizerError, ValueError):
    pass


class FinalityInfeasible(ProvesizerError):
    """No configuration can meet the finality target with the given proof times."""


class MemoryInfeasible(ProvesizerError):
    """A machine lacks the memory required by one of the proving steps."""


class InvalidConfig(ProvesizerError, ValueError):
    pass


class UnknownScenario(ProvesizerError, KeyError):
    pass


class UnknownMachine(ProvesizerError, KeyError):
    pass


class InsufficientRows(ProvesizerError, ValueError):
    pass


class EncodingOverflow(ProvesizerError):
    pass


class BoundsTooLarge(ProvesizerError, ValueError):
    pass


class SolverError(ProvesizerError):
    """The solver produced a reply we could not interpret."""


class SolverUnavailable(SolverError):
    """The solver executable could not be started."""
