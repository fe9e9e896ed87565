"""Exception hierarchy shared by all edmpose modules."""


class EdmPoseError(Exception):
    """Base class for every error raised by edmpose."""


class ValidationError(EdmPoseError, ValueError):
    """Input data violates a documented invariant."""


class AlignmentUnderdeterminedError(ValidationError):
    """Too few anchors, or anchors affinely degenerate, to fix a rigid transform."""


class PlaneUndeterminedError(ValidationError):
    """The horizontal projections of the priors do not determine a vertical plane."""


class InfeasibleProjectionError(ValidationError):
    """A measured range is shorter than the anchor's offset from the working plane."""

    def __init__(self, message, deficit):
        super().__init__(message)
        self.deficit = deficit


class IncompleteMeasurementError(ValidationError):
    """A range required to assemble the observation matrix is missing."""

    def __init__(self, pair):
        super().__init__(f"missing range measurement for pair {pair}")
        self.pair = pair


class ParseError(ValidationError):
    """A scene, fixture or config file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SolverError(EdmPoseError):
    """Numerical failure inside a solver."""


class DescentViolationError(SolverError):
    """The penalized objective increased between outer iterations.

    This signals a defect in the solver, not a property of the data.
    """
