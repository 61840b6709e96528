"""Exception types shared across the package."""


class SggMechError(Exception):
    """Base class for all errors raised by sgg_mech."""


# geometry / shapes
class DimMismatch(SggMechError, ValueError):
    pass


class ShapeMismatch(SggMechError, ValueError):
    pass


class LengthMismatch(SggMechError, ValueError):
    pass


class EmptyInput(SggMechError, ValueError):
    pass


# text
class EmptyVocabulary(SggMechError, ValueError):
    pass


class LlmUnavailable(SggMechError, RuntimeError):
    pass


# selection
class KOutOfRange(SggMechError, ValueError):
    pass


class EmptyInteractionSet(SggMechError, ValueError):
    pass


# matching
class NonFiniteCost(SggMechError, ValueError):
    pass


class TooLarge(SggMechError, ValueError):
    pass


class UnknownClass(SggMechError, KeyError):
    pass


# losses
class InvalidProbability(SggMechError, ValueError):
    pass


class MissingFeature(SggMechError, ValueError):
    pass


class InvalidPair(SggMechError, ValueError):
    pass


class EmptyNegativeSet(SggMechError, ValueError):
    pass


class TooFewEdges(SggMechError, ValueError):
    pass


class NonFiniteComponent(SggMechError, ValueError):
    pass


# evaluation
class MissingBox(SggMechError, ValueError):
    pass


class UnknownSplit(SggMechError, ValueError):
    pass


# harness / io
class ConfigInvalid(SggMechError, ValueError):
    pass


class UnknownCategory(SggMechError, KeyError):
    pass


class UnsupportedFormat(SggMechError, ValueError):
    pass


class MalformedRecord(SggMechError, ValueError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        self.reason = reason
        msg = f"malformed record at line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
