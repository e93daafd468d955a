"""
Errors
======
Exception types shared by every ratecert module
"""

from typing import Optional


class RateCertError(ValueError):
    """Base class for all ratecert errors"""


class DomainError(RateCertError):
    """A point is outside the space (or its interior) an operation needs"""

    def __init__(self, message: str, k: Optional[int] = None):
        if k is not None:
            message = f"{message} (at iterate k={k})"
        super().__init__(message)
        self.k = k


class DimensionError(RateCertError):
    """Points, operators or metrics disagree on dimension"""


class PreconditionError(RateCertError):
    """A mathematical precondition was observed to fail at run time"""


class ConvergenceError(RateCertError):
    """A schedule or iteration ran out of budget"""


class ProblemError(RateCertError):
    """Malformed problem file, with the offending field and line if known"""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.field = field
        self.line = line
