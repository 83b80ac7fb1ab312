"""Exception types shared across the toolkit."""


class RcaError(Exception):
    """Base class for toolkit errors that map to a user/input failure."""

    code = "error"


class DimensionError(RcaError, ValueError):
    code = "dimension"


class ParameterError(RcaError, ValueError):
    code = "parameter"


class SequenceError(RcaError, ValueError):
    code = "sequence"


class FormatError(RcaError, ValueError):
    code = "format"


class GenerationError(RcaError, ValueError):
    code = "generation"


class EvaluationError(RcaError, ValueError):
    code = "evaluation"


class InvariantError(RuntimeError):
    """An internal invariant was violated (a bug, not bad input)."""

    code = "invariant"
