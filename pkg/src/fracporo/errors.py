"""Exception hierarchy shared by all modules."""


class FracPoroError(Exception):
    """Base class for every error raised by the package."""


class GeometryError(FracPoroError):
    """Invalid fracture geometry (interior crossings, overlaps, out of domain)."""


class AdmissibilityError(FracPoroError):
    """The mesh cannot satisfy TPFA orthogonality or does not conform to fractures."""


class DomainError(FracPoroError, ValueError):
    """Argument outside the domain of a constitutive law."""


class ClosureError(FracPoroError):
    """Non-positive porosity or aperture met during assembly."""


class BoundViolation(ClosureError):
    """An accepted state violates a configured porosity or aperture bound."""


class SingularityError(FracPoroError):
    """Mechanical problem has unconstrained rigid modes."""


class LinearSolveError(FracPoroError):
    """Direct factorization or solve failed."""


class SingularMatrix(LinearSolveError):
    """Matrix is (numerically or structurally) singular."""


class IterationLimit(FracPoroError):
    """An iterative linear solver exhausted its iteration budget."""


class NonConvergence(FracPoroError):
    """Newton iterations did not converge; the caller should reduce the step."""


class OuterNonConvergence(NonConvergence):
    """The outer flow-mechanics fixed point did not converge."""


class Abort(FracPoroError):
    """Time step fell below the floor; the run cannot continue."""


class UnknownScenario(FracPoroError, KeyError):
    """No builtin scenario with the requested name."""


class ParseError(FracPoroError):
    """Malformed configuration file."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(FracPoroError, ValueError):
    """Configuration parsed but violates a modelling assumption."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class IoError(FracPoroError, OSError):
    """Failure while writing or reading output files."""
