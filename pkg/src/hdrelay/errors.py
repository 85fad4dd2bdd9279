"""Exception types shared across the package.

Every domain error derives from :class:`HdrelayError` so callers (and the
CLI) can distinguish domain failures from I/O or parse failures.
"""


class HdrelayError(Exception):
    """Base class for all domain errors raised by this package."""


class NormalizationError(HdrelayError):
    """A probability row or table does not sum to one within tolerance."""


class HalfDuplexViolation(HdrelayError):
    """A kernel row contradicts the transmit/listen constraints."""


class MissingKernelRow(HdrelayError):
    """The channel kernel lacks a row for an admissible input combination."""


class InvalidReuseFactor(HdrelayError):
    """Resource reuse factor must be a positive integer."""


class CycleError(HdrelayError):
    """Factor dependencies admit no topological order."""


class CardinalityMismatch(HdrelayError):
    """Declared alphabet sizes disagree with table shapes or maps."""


class UnknownVariable(HdrelayError):
    """A referenced variable name is not part of the joint."""


class OverlapError(HdrelayError):
    """Variable groups passed to an information measure are not disjoint."""


class StructureMismatch(HdrelayError):
    """A distribution does not match the required factorization structure."""


class OrderingMismatch(HdrelayError):
    """An ordering is inconsistent with the channel it is applied to."""


class TooManyRelays(HdrelayError):
    """Exhaustive ordering search is capped at six relays."""


class ScheduleNotFixed(HdrelayError):
    """The operation requires a fixed (known-to-all) schedule."""


class InvalidPhaseProbability(HdrelayError):
    """Phase probability must lie in [0, 1]."""


class DimensionCap(HdrelayError):
    """The optimization problem has more free blocks than the configured cap."""


class NonFiniteRate(HdrelayError):
    """An evaluator returned NaN, which signals an upstream bug."""


class LatticeTooLarge(HdrelayError):
    """The grid oracle lattice exceeds the enumeration cap."""


class TooFewSamples(HdrelayError):
    """Monte-Carlo estimation needs at least 1000 samples."""


class UnknownParameter(HdrelayError):
    """A sweep referenced a parameter the distribution does not expose."""


class SpecFormatError(HdrelayError):
    """A channel or distribution description is malformed."""
