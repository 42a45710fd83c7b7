"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and an optional
``context`` dict; the CLI serializes both into its error record and maps
the class to an exit status.
"""


class NwlError(Exception):
    code = "error"
    exit_status = 1

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def record(self):
        return {"code": self.code, "message": self.message,
                "context": {k: _plain(v) for k, v in self.context.items()}}


def _plain(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return repr(value)


# kernel calculus

class KernelError(NwlError):
    code = "invalid_kernel"
    exit_status = 2


class NegativeSymbol(KernelError):
    code = "negative_symbol"


class InsufficientSmoothness(KernelError):
    code = "insufficient_smoothness"


class NoMatch(KernelError):
    code = "no_match"


class NonElliptic(KernelError):
    code = "non_elliptic"


class UnknownKernel(KernelError):
    code = "unknown_kernel"


class ExpressionError(KernelError):
    code = "bad_expression"


# grid

class NonFiniteMultiplier(NwlError):
    code = "non_finite_multiplier"
    exit_status = 3


# solver

class NumericalAbort(NwlError):
    """Base for runs that cannot be trusted; ``partial`` holds what was computed."""
    exit_status = 3

    def __init__(self, message, partial=None, **context):
        super().__init__(message, **context)
        self.partial = partial


class SolutionOverflow(NumericalAbort):
    code = "overflow"


class BoundaryLeak(NumericalAbort):
    code = "boundary_leak"


class IndefiniteEnergy(NwlError):
    code = "indefinite_energy"
    exit_status = 3


# comparison

class MismatchedRuns(NumericalAbort):
    code = "mismatched_runs"


class InsufficientPoints(NwlError):
    code = "insufficient_points"
    exit_status = 2


class DegenerateTable(NwlError):
    code = "degenerate_table"
    exit_status = 4


# cli

class SchemaError(NwlError):
    code = "schema_error"
    exit_status = 2
