"""Exception hierarchy.

Three families map onto the CLI exit codes: parse problems (2), model
validation problems (3) and numerical failures (4).
"""


class MonoloopError(Exception):
    """Base class for every error raised by this package."""


# --- parsing -----------------------------------------------------------------

class ParseError(MonoloopError):
    """Syntax error in an expression or a model document.

    ``offset`` is a byte offset into the expression source, ``line`` the
    1-based line of the model document (when known).
    """

    def __init__(self, message, offset=None, line=None):
        self.offset = offset
        self.line = line
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
        if self.offset is not None:
            where.append(f"offset {self.offset}")
        return f"{msg} ({', '.join(where)})" if where else msg


class IllegalCharacter(ParseError):
    pass


class UnbalancedParen(ParseError):
    pass


class UnexpectedToken(ParseError):
    pass


class UnknownFunction(ParseError):
    def __init__(self, name, offset=None, line=None):
        self.name = name
        super().__init__(f"unknown function {name!r}", offset, line)


class WrongArity(ParseError):
    def __init__(self, name, got, expected, offset=None, line=None):
        self.name = name
        self.got = got
        self.expected = expected
        super().__init__(
            f"{name}() takes {expected} argument(s), got {got}", offset, line
        )


# --- validation --------------------------------------------------------------

class ValidationError(MonoloopError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message)

    def __str__(self):
        msg = super().__str__()
        return f"{msg} (line {self.line})" if self.line is not None else msg


class UnboundVariable(ValidationError):
    def __init__(self, name, line=None):
        self.name = name
        super().__init__(f"unbound variable {name!r}", line)


class DimensionMismatch(ValidationError, ValueError):
    pass


class EmptyInput(ValidationError, ValueError):
    pass


# --- numerics ----------------------------------------------------------------

class NumericalError(MonoloopError):
    pass


class EvalDomainError(NumericalError, ArithmeticError):
    def __init__(self, message, offset=None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (offset {offset})")


class IntegrationFailure(NumericalError):
    """An integration could not be completed; ``sample`` names the offending case."""

    def __init__(self, message, sample=None):
        self.sample = sample
        super().__init__(message)


class StepUnderflow(IntegrationFailure):
    pass


class Diverged(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message, u=None, partial=None):
        self.u = u
        self.partial = partial
        super().__init__(message)


class SingularJacobian(NumericalError):
    pass


class SingularA(NumericalError):
    pass


class MarginCase(NumericalError):
    """Max real part sits inside the +-1e-9 dead band; caller decides."""

    def __init__(self, message, value=None):
        self.value = value
        super().__init__(message)


class PairNotPeriodTwo(NumericalError):
    pass
