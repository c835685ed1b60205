"""Exception hierarchy.  Each error carries enough context to diagnose the input."""


class RydNeptError(Exception):
    """Base class for all package errors."""


class ParameterError(RydNeptError, ValueError):
    pass


class DegenerateKernel(RydNeptError):
    """The generator's null space is not one-dimensional."""


class MarginalStability(RydNeptError):
    """An eigenvalue of the linearised flow sits on the imaginary axis."""


class StepFailure(RydNeptError):
    """The adaptive integrator could not meet its tolerance."""


class ZeroProbe(RydNeptError, ValueError):
    pass


class Overcoupled(RydNeptError, ValueError):
    """Round-trip amplitude >= 1."""


class NoConvergence(RydNeptError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class TooFewPoints(RydNeptError, ValueError):
    pass


class RegionTooSmall(RydNeptError, ValueError):
    pass


class ZeroVariance(RydNeptError, ValueError):
    pass


class NonpositiveF(RydNeptError, ValueError):
    pass


class NonpositivePoint(RydNeptError, ValueError):
    pass


class DegenerateData(RydNeptError, ValueError):
    pass


class NoSplitting(RydNeptError):
    pass


class NoEdge(RydNeptError):
    pass


class TooFewSamples(RydNeptError, ValueError):
    pass


class OutOfLinearRange(RydNeptError, ValueError):
    pass


class SchemaError(RydNeptError, ValueError):
    def __init__(self, message, path=None, line=None):
        loc = ""
        if path:
            loc += f" at '{path}'"
        if line is not None:
            loc += f" (line {line})"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class FormatError(RydNeptError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
