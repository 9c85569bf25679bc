"""Exception hierarchy shared by every module of the package."""


class AnalogShardsError(Exception):
    """Base class for all errors raised by analog_shards."""


class InvalidParameterError(AnalogShardsError, ValueError):
    """A public parameter violates its documented domain."""


class InvalidArgumentError(AnalogShardsError, ValueError):
    """An argument has the wrong shape, length or content."""


class InsufficientServersError(InvalidParameterError):
    """Fewer servers than the degree of f(p(x)) requires (N < D*t + 1)."""


class SingularityError(AnalogShardsError, ArithmeticError):
    """A matrix that must be invertible (or full rank) is not."""


class HypothesisViolatedError(InvalidParameterError):
    """A precondition of a closed-form bound does not hold (e.g. r > m)."""


class SamplingError(AnalogShardsError, RuntimeError):
    """Rejection sampling exceeded its retry budget."""


class FormatError(AnalogShardsError, ValueError):
    """A file or byte stream does not follow its declared layout."""


class EmptyClassError(AnalogShardsError, ValueError):
    """A requested class label has no samples."""


class TransportError(AnalogShardsError, IOError):
    """A framed message was corrupted or a connection broke."""


class ProtocolFailureError(AnalogShardsError, RuntimeError):
    """Not every worker returned a result; decoding is impossible.

    The transcript collected up to the failure is kept on ``transcript``.
    """

    def __init__(self, message, transcript=None):
        super().__init__(message)
        self.transcript = transcript


class SecretRangeWarning(UserWarning):
    """A secret exceeds the declared bound r; privacy/accuracy bounds no longer apply."""
