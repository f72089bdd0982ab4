"""Package-level exception types."""


class NumericalError(RuntimeError):
    """Raised when a linear-algebra or sampling step fails beyond recovery.

    Validation problems (bad shapes, out-of-domain points, degenerate inputs)
    raise ValueError instead; this class is reserved for failures that appear
    only at run time, such as a conditional precision matrix that stays
    non-positive-definite after a jitter retry.
    """
