"""
KESTREL Error Types
"""


class KestrelError(Exception):
    """Base class for every error raised by the KESTREL library"""


class TensorFormatError(KestrelError, ValueError):
    """Malformed .tns content"""


class DimensionMismatchError(KestrelError, ValueError):
    """Shapes or lengths that must agree do not"""


class CoordinateRangeError(KestrelError, IndexError):
    """A coordinate or model index lies outside the tensor dimensions"""


class DuplicateCoordinateError(KestrelError, ValueError):
    """Duplicate coordinate rows under the 'error' duplicate policy"""


class CapacityError(KestrelError, ValueError):
    """Requested size exceeds what the tensor or the dense cap allows"""


class ModeError(KestrelError, IndexError):
    """Mode index out of range"""


class MissingPermutationError(KestrelError, ValueError):
    """Permuted MTTKRP launched without a permutation set"""


class InvalidParameterError(KestrelError, ValueError):
    """A scalar parameter is outside its valid range"""


class ZeroNormError(KestrelError, ValueError):
    """Operation undefined for a tensor with zero Frobenius norm"""


class SingularSystemError(KestrelError, ArithmeticError):
    """Normal-equation solve failed"""

    def __init__(self, message, mode=None, iteration=None):
        super().__init__(message)
        self.mode = mode
        self.iteration = iteration


class BenchConfigError(KestrelError, ValueError):
    """Inconsistent benchmark configuration"""
