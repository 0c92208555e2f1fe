"""Exception hierarchy shared by every module of the package."""


class FrechetSPCError(Exception):
    """Base class for all package errors."""


class DomainError(FrechetSPCError, ValueError):
    """An argument lies outside the domain of an operation."""


class ShapeError(FrechetSPCError, ValueError):
    """Curves or parameter vectors have incompatible sizes or grids."""


class IdentifiabilityError(FrechetSPCError, ValueError):
    """A least-squares or registration problem has no unique solution."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(FrechetSPCError, RuntimeError):
    """A numerical routine failed; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigurationError(FrechetSPCError, ValueError):
    """Invalid or degenerate configuration / in-control data."""


class ParseError(FrechetSPCError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IncompatibleError(FrechetSPCError, ValueError):
    """Artifacts produced under different grids or settings were combined."""
