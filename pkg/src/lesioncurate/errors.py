"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``InputError`` (bad files, bad arguments; exit 2) and ``DomainError``
(well-formed input the algorithms cannot handle; exit 3).
"""


class CurationError(Exception):
    """Base class for every error raised by this package."""


class InputError(CurationError):
    pass


class DomainError(CurationError):
    pass


# image I/O
class ImageIOError(InputError, OSError):
    pass


class DecodeError(InputError):
    pass


class UnsupportedDepth(InputError):
    pass


class NotColorImage(DomainError):
    pass


class EmptyHistogram(DomainError):
    pass


# morphology / segmentation
class ElementTooLarge(DomainError):
    pass


class DegeneratePlane(DomainError):
    pass


class EmptyMask(DomainError):
    pass


class EmptyRoi(DomainError):
    pass


# shared shape checks
class DimensionMismatch(DomainError):
    pass


# diversity selection
class IndexOutOfRange(DomainError):
    pass


class DuplicateIndex(DomainError):
    pass


class KTooLarge(DomainError):
    pass


class InstanceTooLarge(DomainError):
    pass


# metrics
class NonFiniteInput(DomainError):
    pass


class WeightOutOfRange(InputError):
    pass


class TooFewSamples(DomainError):
    pass


class NotPsd(DomainError):
    pass


# pipeline
class CsvParseError(InputError):
    pass


class NoRecords(InputError):
    pass


class ClassTooSmall(DomainError):
    pass


class SeedSegmentationFailed(DomainError):
    pass


class CohortTooSmall(DomainError):
    pass


class SchemaVersionMismatch(InputError):
    pass
