"""Exception types shared across the package."""


class XsrError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(XsrError):
    """Tensor dimensions do not satisfy an operation's requirements."""


class ContractError(XsrError):
    """A documented precondition was violated by the caller."""


class ConfigError(XsrError):
    """Invalid configuration value or unknown configuration key."""


class ParseError(XsrError):
    """Malformed input file; message carries the offending line number."""


class DomainError(XsrError):
    """Mathematically undefined input (e.g. cosine of a zero vector)."""


class CheckpointError(XsrError):
    """Corrupt, truncated, or incompatible checkpoint file."""


class IndexingError(XsrError):
    """A knowledge-base entry could not be indexed."""


class TrainingDiverged(XsrError):
    """Training produced a non-finite loss and was aborted."""
