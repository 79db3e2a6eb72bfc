"""Exception hierarchy for the toolkit.

Names follow the operation contracts: construction and validation failures
raise narrow subclasses so callers can react per condition.
"""


class ChanprobeError(Exception):
    """Base class for all toolkit errors."""


class NegativeWeight(ChanprobeError):
    pass


class SumNotOne(ChanprobeError):
    """Weights do not sum to one; carries the signed deviation from 1."""

    def __init__(self, deviation: float):
        super().__init__(f"weights sum deviates from 1 by {deviation:+.3e}")
        self.deviation = deviation


class SymbolOutOfRange(ChanprobeError):
    pass


class LengthMismatch(ChanprobeError):
    pass


class EmptySequence(ChanprobeError):
    pass


class ChannelParse(ChanprobeError):
    """Malformed channel, code, or distortion file."""


class LabelOutOfAlphabet(ChanprobeError):
    pass


class DepthOverflow(ChanprobeError):
    """Tree or leaf enumeration would exceed the hard size guard."""


class PathTooLong(ChanprobeError):
    pass


class SingletonInputAlphabet(ChanprobeError):
    pass


class EnumerationTooLarge(ChanprobeError):
    pass


class InvalidSite(ChanprobeError):
    pass


class AlreadyWellOrdered(ChanprobeError):
    pass


class NonpositiveMu(ChanprobeError):
    pass


class BoundViolated(ChanprobeError):
    """An exhaustively computed deviation probability exceeds its ceiling.

    This is fatal: it falsifies either the bound or the implementation.
    """


class ZeroLikelihood(ChanprobeError):
    pass


class AlphabetTooLarge(ChanprobeError):
    pass


class ConfigParse(ChanprobeError):
    pass
