"""Exception hierarchy.

Every error carries a short machine-parsable ``category`` used by the CLI
when reporting failures on stderr.
"""


class AtriaRegError(Exception):
    category = "Error"


class ConstantIntensity(AtriaRegError):
    category = "ConstantIntensity"


class EmptyMask(AtriaRegError):
    category = "EmptyMask"


class BothEmpty(AtriaRegError):
    category = "BothEmpty"


class MissingMasks(AtriaRegError):
    category = "MissingMasks"


class GeometryMismatch(AtriaRegError):
    category = "GeometryMismatch"


class TooSmall(AtriaRegError):
    category = "TooSmall"


class NonFiniteLoss(AtriaRegError):
    category = "NonFiniteLoss"


class ConfigInvalid(AtriaRegError, ValueError):
    category = "ConfigInvalid"


class BadMagic(AtriaRegError):
    category = "BadMagic"


class UnsupportedDatatype(AtriaRegError):
    category = "UnsupportedDatatype"


class TruncatedFile(AtriaRegError):
    category = "TruncatedFile"


class NonFiniteData(AtriaRegError):
    category = "NonFiniteData"


class IoFailure(AtriaRegError, OSError):
    category = "IoFailure"


class PhaseError(AtriaRegError):
    """Wraps a registration failure with the phase it happened at."""

    def __init__(self, phase, cause):
        super().__init__(f"phase {phase}: {cause}")
        self.phase = phase
        self.cause = cause
        self.category = getattr(cause, "category", "Error")
