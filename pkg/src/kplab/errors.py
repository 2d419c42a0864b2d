"""Exception hierarchy shared by all kplab modules."""


class KPLabError(Exception):
    """Base class for every error raised by kplab."""


class AntiderivativeUndefined(KPLabError):
    """A field has nonzero x-mean on some transverse harmonic n != 0."""


class DegenerateField(KPLabError):
    pass


class BoxTooSmall(KPLabError):
    """Profile tails do not decay below tolerance inside the periodic box."""


class IncompatibleGrid(KPLabError):
    pass


class NoSignChange(KPLabError):
    """A bisection bracket does not straddle a root."""


class NotACharacteristicRoot(KPLabError):
    pass


class OutOfRange(KPLabError):
    pass


class EigensolveFailed(KPLabError):
    pass


class AmbiguousSpectrum(KPLabError):
    """More than one filtered real growth rate survives refinement."""


class NearSingular(KPLabError):
    pass


class InsufficientSamples(KPLabError):
    pass


class BlowupDetected(KPLabError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InterpolationGap(KPLabError):
    pass


class NewtonDiverged(KPLabError):
    pass


class WindowTooShort(KPLabError):
    pass


class FloorTooHigh(KPLabError):
    pass
