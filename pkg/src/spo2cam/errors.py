"""Exception hierarchy shared by every stage of the pipeline."""


class Spo2CamError(Exception):
    """Base class for all errors raised by this package."""


# signal extraction
class DegenerateHistogram(Spo2CamError):
    pass


class InsufficientContrast(Spo2CamError):
    pass


class EmptyMask(Spo2CamError):
    pass


# dataset building
class TooFewKnots(Spo2CamError):
    pass


class SignalTooShort(Spo2CamError):
    pass


class ReferenceGap(Spo2CamError):
    pass


class BadBoundaries(Spo2CamError):
    pass


class EmptyDataset(Spo2CamError):
    pass


class TooFewParticipants(Spo2CamError):
    pass


# networks
class ShapeMismatch(Spo2CamError):
    pass


class EmptyBatch(Spo2CamError):
    pass


class SpecInvalid(Spo2CamError):
    pass


class DivergenceDetected(Spo2CamError):
    pass


# ratio-of-ratios baseline
class NoPulse(Spo2CamError):
    pass


class DegenerateFit(Spo2CamError):
    pass


# tuning
class BadBudget(Spo2CamError):
    pass


class ObjectiveFailed(Spo2CamError):
    def __init__(self, config: dict, cause: Exception):
        super().__init__(f"objective failed for config {config}: {cause}")
        self.config = config
        self.cause = cause


# evaluation
class NoOverlap(Spo2CamError):
    pass


class EmptyList(Spo2CamError):
    pass


class TooFewSamples(Spo2CamError):
    pass


class NonConvergence(Spo2CamError):
    pass
