"""Exception hierarchy with stable exit-code classes for scripted use."""


class ReductionError(Exception):
    """Base class. ``exit_code`` groups errors into classes the CLI reports."""

    exit_code = 1

    def __init__(self, message, stage=None, **details):
        super().__init__(message)
        self.stage = stage
        self.details = details

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


# -- validation class (exit 2) -------------------------------------------------

class ValidationError(ReductionError):
    exit_code = 2


class StructuralError(ValidationError):
    """Inconsistent dimensions or a violated rank assumption."""


class DataError(ValidationError):
    """Non-finite entries."""


class DefinitenessError(ValidationError):
    """A matrix that must be positive definite is not."""


class ParameterError(ValidationError):
    """Invalid generator or configuration parameter."""


class PreconditionError(ValidationError):
    """Input violates a mathematical precondition of an operation."""


# -- solver class (exit 3) -----------------------------------------------------

class SolverError(ReductionError):
    exit_code = 3


class EvaluationError(SolverError):
    """Singular resolvent or pencil at a requested evaluation point."""


class ConvergenceError(SolverError):
    """Regularization path did not settle; carries the last iterate."""

    def __init__(self, message, last_iterate=None, **details):
        super().__init__(message, **details)
        self.last_iterate = last_iterate


class NotPSDError(SolverError):
    """Matrix expected to be positive semidefinite has a negative eigenvalue."""


# -- planning class (exit 4) ---------------------------------------------------

class PlanningError(ReductionError):
    exit_code = 4

    def __init__(self, message, feasible_r=(), **details):
        super().__init__(message, **details)
        self.feasible_r = list(feasible_r)


# -- structure / assembly class (exit 5) ---------------------------------------

class StructureError(ReductionError):
    exit_code = 5


class NumericalBreakdownError(StructureError):
    """Projection matrices lost biorthogonality."""


class StabilityViolationError(StructureError):
    """Zero dynamics with an eigenvalue off the open left half-plane."""


class DegenerateSignError(StructureError):
    """Real eigenvalue whose eigenvectors are (numerically) S-neutral."""


class NotDiagonalizableError(StructureError):
    """Eigenvector basis too ill-conditioned (non-semi-simple eigenvalue).

    The perturbation repair for Jordan blocks is not implemented.
    """


class NotStandardTripleError(StructureError):
    pass


class AssemblyError(StructureError):
    pass


class OverdampingViolation(StructureError):
    pass


# -- I/O class (exit 6) --------------------------------------------------------

class ArtifactIOError(ReductionError):
    exit_code = 6
