"""Exception hierarchy shared by every module of the package."""


class LdpError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(LdpError, ValueError):
    pass


class SupportError(LdpError, ValueError):
    """A divergence was evaluated outside its domain (p(x) > 0 but q(x) = 0)."""


class UnknownSymbolError(LdpError, KeyError):
    pass


class DomainMismatchError(LdpError, ValueError):
    pass


class NonPureRandomizerError(LdpError, ValueError):
    pass


class ZeroEvidenceError(LdpError, ValueError):
    """The observed messages have probability zero under the prior."""


class ZeroLikelihoodError(LdpError, ValueError):
    pass


class RunawayProtocolError(LdpError, RuntimeError):
    pass


class MaxDrawsExceededError(LdpError, RuntimeError):
    pass


class EnumerationOverflowError(LdpError, RuntimeError):
    pass


class SizeOverflowError(LdpError, MemoryError):
    pass


class IntractableGroundSetError(LdpError, ValueError):
    pass


class DegenerateInstanceError(LdpError, ValueError):
    pass


class InsufficientCountError(LdpError, ValueError):
    pass


class ConvergenceError(LdpError, RuntimeError):
    pass
