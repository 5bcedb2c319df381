"""Exception hierarchy shared by all holotweezers modules."""


class HoloTweezersError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(HoloTweezersError, ValueError):
    pass


class DimensionMismatchError(HoloTweezersError, ValueError):
    pass


class PreconditionError(HoloTweezersError, ValueError):
    pass


class SizeOverflowError(HoloTweezersError, MemoryError):
    pass


class WeightUpdateError(HoloTweezersError, ZeroDivisionError):
    """Raised when the gain is too aggressive for the measured intensity spread."""


class FrameError(HoloTweezersError):
    """A hologram sequence failed at a particular frame."""

    def __init__(self, frame, cause):
        super().__init__(f"frame {frame}: {cause}")
        self.frame = frame
        self.cause = cause


class IntegratorError(HoloTweezersError, RuntimeError):
    pass


class BracketError(HoloTweezersError, RuntimeError):
    pass


class FitError(HoloTweezersError, RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class ConfigError(HoloTweezersError):
    """Config file failed schema validation; ``issues`` holds per-field diagnostics."""

    def __init__(self, message, issues=()):
        super().__init__(message)
        self.issues = list(issues)


class FlatCurveError(PreconditionError):
    """Recapture curve has no falling edge, so the temperature is unidentifiable."""
