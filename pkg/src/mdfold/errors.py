class ConfigurationError(ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class NotWellDefinedError(RuntimeError):
    """The folding operator cannot keep the output inside [-lambda, lambda]."""


class ResolutionError(RuntimeError):
    """Evaluation grid too coarse to resolve every fold."""
