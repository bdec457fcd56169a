"""Exception types shared across the package."""
from __future__ import annotations


class DomainError(ValueError):
    """An input value lies outside the operation's domain."""


class StructuralError(ValueError):
    """Matrix shapes or layer schedules do not line up."""


class CompileError(ValueError):
    """A source spec or netlist cannot be compiled into a weight program."""


class DecodeError(ValueError):
    """A tape or file does not follow its grammar.

    ``position`` is the 1-based token position (or line number) of the fault.
    """

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class PreconditionError(ValueError):
    """A statistical test was given a stream shorter than its minimum."""


class LowMarginError(RuntimeError):
    """A readout channel landed too close to its decision threshold.

    Raised by generation instead of emitting a token whose bits cannot be
    trusted; it signals a broken construction rather than a random bit flip.
    """

    def __init__(self, message: str, step: int, channel: int, value: float):
        super().__init__(message)
        self.step = step
        self.channel = channel
        self.value = value
