"""Exception types shared across the package."""


class BitfedError(Exception):
    """Base class for all package errors."""


class ParameterError(BitfedError):
    """Ring or scheme parameters violate a construction invariant."""


class DomainMismatchError(BitfedError):
    """Polynomial supplied in the wrong evaluation domain."""


class ContextMismatchError(BitfedError):
    """Operands belong to different ring contexts."""


class PlaintextRangeError(BitfedError):
    """Plaintext coefficient outside [0, t)."""


class MaskReuseError(BitfedError):
    """An encryption mask was used more than once (security-critical)."""


class InfeasibleLayoutError(BitfedError):
    """No packing layout satisfies the aggregation bounds."""


class WeightRangeError(BitfedError):
    """Quantized weight exceeds the field width of the layout."""


class IntegrityError(BitfedError):
    """Aggregated data failed a correctness guard (e.g. coefficient >= t)."""


class WireDecodeError(BitfedError):
    """Malformed wire message; ``offset`` names the failing byte position."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ProtocolError(BitfedError):
    """Round-level contract violation (mismatched rounds, bad metadata...)."""


class RoundAbort(BitfedError):
    """The server aborted the round (missing updates by deadline)."""


class ConfigError(BitfedError):
    """Invalid experiment configuration."""
