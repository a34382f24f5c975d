class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class DegenerateDistributionError(ValueError):
    """A distribution with zero variance was supplied where a spread is required."""


class IllConditionedError(RuntimeError):
    """The covariance matrix stayed ill-conditioned after the maximum jitter."""


class NotFittedError(RuntimeError):
    """A model was used before it was fitted."""


class ArtifactFormatError(ValueError):
    """A persisted artifact is malformed or does not match the expected layout."""
