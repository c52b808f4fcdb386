"""Exception hierarchy shared by every fermat-forge module."""
from typing import Optional


class ForgeError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ForgeError, ValueError):
    """An operand violates an operation's precondition."""


class ResourceError(ForgeError):
    """An operand exceeds a configured budget; the work is refused, never truncated."""

    def __init__(self, what: str, needed: int, budget_name: str, budget: int):
        self.what = what
        self.needed = needed
        self.budget_name = budget_name
        self.budget = budget
        super().__init__(f"{what} needs {needed:,} but {budget_name} is {budget:,}")


class VerificationError(ForgeError):
    """A stored artifact failed re-verification."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")


class IncompleteFactorization(ForgeError):
    """Factorization effort ran out before the cofactor was split."""

    def __init__(self, n: int, cofactor: int):
        self.n = n
        self.cofactor = cofactor
        super().__init__(f"could not finish factoring {n}: cofactor {cofactor} left")
