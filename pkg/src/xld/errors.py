"""Exception taxonomy shared across the package."""


class XLDError(Exception):
    """Base class for all package errors."""


class InputError(XLDError):
    """Caller passed arguments violating an operation's preconditions."""


class FormatError(XLDError):
    """A file on disk violates its documented schema."""


class StateError(XLDError):
    """Operation requires state (e.g. capture mode) that is not present."""


class TrainingError(XLDError):
    """Numeric failure during optimization (NaN/Inf gradients etc.)."""


class CorpusExhausted(XLDError):
    """The batch sampler ran out of unused documents."""
