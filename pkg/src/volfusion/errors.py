"""Exception types shared across the package."""


class VolFusionError(Exception):
    """Base class for all package errors."""


class FileMissing(VolFusionError):
    pass


class MalformedHeader(VolFusionError):
    pass


class NonPositiveSpacing(VolFusionError):
    pass


class DegenerateWindow(VolFusionError):
    pass


class IoFailure(VolFusionError):
    pass


class InvalidSpec(VolFusionError):
    pass


class InvalidParams(VolFusionError):
    pass


class ShapeMismatch(VolFusionError):
    pass


class SpacingMismatch(VolFusionError):
    pass


class SameScanViolation(VolFusionError):
    pass


class VolumeTooSmall(VolFusionError):
    pass


class CorpusTooSmall(VolFusionError):
    pass


class LabelOutOfRange(VolFusionError):
    pass


class ScaleMismatch(VolFusionError):
    pass


class InvalidConfig(VolFusionError):
    pass


class ShapeIncompatible(VolFusionError):
    pass


class ArchitectureMismatch(VolFusionError):
    pass


class EmptyCorpus(VolFusionError):
    pass


class WindowLargerThanVolume(VolFusionError):
    pass


class ClassMismatch(VolFusionError):
    pass


class DivergenceDetected(VolFusionError):
    pass
