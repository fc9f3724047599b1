"""Exception types shared across the package."""


class YbkError(Exception):
    """Base class for all package-specific errors."""


class SingularityError(YbkError):
    """A spectral point hit, or came too close to, a zero of some denominator.

    ``what`` names the offending denominator, e.g. ``"cos(u)"`` or ``"q(u)"``.
    """

    def __init__(self, what: str, value=None):
        self.what = what
        self.value = value
        msg = f"singular evaluation: {what}"
        if value is not None:
            msg += f" at {value}"
        super().__init__(msg)


class DimensionError(YbkError):
    """Leg dimensions do not multiply up to the matrix size."""


class EmbeddingError(YbkError):
    """Target sites collide or fall outside the chain."""


class UnsupportedAutomorphismError(YbkError):
    """A crossing automorphism was requested for a gate without crossing unitarity."""


class TwistError(YbkError):
    """Twist matrix does not commute with the gate's two-site structure."""


class SideMismatchError(YbkError):
    """A K-matrix was used on the wrong boundary."""


class LimitOrderingError(YbkError):
    """A boundary matrix is singular at zero spectral parameter; use the
    product-first route instead of termwise limits."""


class DegenerateNormalizationError(YbkError):
    """The charge normalization constant came out (numerically) zero."""


class ConfigError(YbkError):
    """Malformed run configuration or CLI usage."""
