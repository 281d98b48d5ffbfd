"""Exception hierarchy shared by every layer of the engine."""


class TwoPCError(Exception):
    """Base class for engine errors."""

    exit_code = 1


class TransportError(TwoPCError):
    """Peer disconnected, timed out, or the socket failed."""

    exit_code = 7


class ProtocolError(TwoPCError):
    """The two parties disagree on the protocol schedule or a payload is malformed."""

    exit_code = 3


class PreprocessingUnderrun(TwoPCError):
    """A correlated-randomness pool ran out in the middle of a protocol step."""

    exit_code = 4

    def __init__(self, kind: str, requested, available, step: str = ""):
        self.kind = kind
        self.requested = requested
        self.available = available
        self.step = step
        where = f" during {step}" if step else ""
        super().__init__(
            f"preprocessing underrun{where}: needed {requested} of kind {kind!r}, "
            f"pool has {available}; regenerate pools with a larger count"
        )


class DimensionError(TwoPCError, ValueError):
    """Operand shapes do not compose."""

    exit_code = 3


class DomainError(TwoPCError, ValueError):
    """Input outside the mathematical domain of the operation (e.g. divisor <= 0)."""

    exit_code = 3


class RangeError(TwoPCError, ValueError):
    """A real number does not fit the fixed-point encoding."""

    exit_code = 3


class ConfigMismatch(TwoPCError):
    """Both parties must load byte-identical configurations."""

    exit_code = 6


class PoolIOError(TwoPCError, OSError):
    """A pool, checkpoint or dataset file could not be read or written."""

    exit_code = 5
