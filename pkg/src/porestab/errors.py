"""Exception hierarchy.

The CLI maps :class:`ConfigurationError` and :class:`PreconditionError` to
exit code 2 and :class:`NumericalError` to exit code 3.
"""


class PorestabError(Exception):
    pass


class ConfigurationError(PorestabError, ValueError):
    """Invalid user-facing configuration (names the offending field)."""


class DomainError(PorestabError, ValueError):
    """Input outside the mathematical domain of an operation."""


class SingularLinearizationError(DomainError):
    pass


class UnsupportedConstructionError(PorestabError, ValueError):
    pass


class AssemblyError(PorestabError, ValueError):
    pass


class PreconditionError(PorestabError, ValueError):
    pass


class InsufficientDecayError(PorestabError, ValueError):
    pass


class NumericalError(PorestabError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class PositivityError(NumericalError):
    pass
