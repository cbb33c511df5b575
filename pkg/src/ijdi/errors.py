"""Exception hierarchy.

Everything raised on bad input derives from :class:`DomainError` so the CLI
can map it to exit status 1 in one place.
"""


class DomainError(ValueError):
    """Input violates a mathematical or schema precondition."""


class SchemaError(DomainError):
    """Column, attribute or value does not match the table schema."""


class EmptyFrameError(DomainError):
    """The requested outcome class has no records."""


class DegenerateSubgroupError(DomainError):
    """Subgroup or its complement is empty within the frame."""


class MisuseError(DomainError):
    """An adjustment was requested while its precondition does not hold."""


class BudgetExceededError(DomainError):
    """Exhaustive enumeration would exceed the configured budget."""


class IterationLimitError(RuntimeError):
    """The edge-case correction loop did not settle within its backstop."""


class ConsistencyError(AssertionError):
    """Two formulations that must agree returned different answers."""
