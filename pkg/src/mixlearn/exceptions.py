"""Exception types raised by mixlearn operations."""


class MixlearnError(Exception):
    """Base class for all mixlearn errors."""


class NonErgodicError(MixlearnError):
    """Power iteration failed to converge: the chain is reducible or periodic."""


class InvalidLagError(MixlearnError, ValueError):
    """A mixing lag k < 1 was requested."""


class InvalidStateError(MixlearnError, ValueError):
    """A state index is out of range for the process."""


class InvalidParamError(MixlearnError, ValueError):
    """A process or loss parameter is outside its allowed range."""


class DomainViolationError(MixlearnError, ValueError):
    """A hypothesis lies outside the feasible ball."""


class GradientTooLargeError(MixlearnError, ValueError):
    """A supplied subgradient exceeds the declared Lipschitz bound."""


class LengthMismatchError(MixlearnError, ValueError):
    """A sample sequence does not match the ledger length."""


class TraceMissingError(MixlearnError):
    """A diagnostic needs the full iterate trace but it was not stored."""


class NonConvergedError(MixlearnError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class InvalidTauError(MixlearnError, ValueError):
    """A block length tau < 1 was requested."""


class DeltaTooLargeError(MixlearnError, ValueError):
    """Freedman-style bounds require delta < 1/e."""


class SingularSystemError(MixlearnError):
    """A linear system in the second-order update could not be solved."""


class NotPositiveDefiniteError(MixlearnError, ValueError):
    """The second-order regularizer epsilon must be positive."""


class UnsupportedLossError(MixlearnError, TypeError):
    """The requested operation needs a smooth (twice differentiable) loss."""


class ConfigError(MixlearnError, ValueError):
    """An experiment configuration failed validation."""
