"""Exception hierarchy shared by every spikefield module."""


class SpikeFieldError(Exception):
    """Base class for all errors raised by spikefield."""


class FormatError(SpikeFieldError, ValueError):
    pass


class BadMagic(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class ZeroDimension(FormatError):
    pass


class OutOfBounds(SpikeFieldError, IndexError):
    pass


class EmptyWindow(SpikeFieldError, ValueError):
    pass


class DimensionMismatch(SpikeFieldError, ValueError):
    pass


class InsufficientSpikes(SpikeFieldError, ValueError):
    """Raised when calibration needs at least two spikes per pixel.

    ``pixels`` holds the offending (x, y) coordinates.
    """

    def __init__(self, pixels, message=None):
        self.pixels = list(pixels)
        if message is None:
            head = ", ".join(f"({x},{y})" for x, y in self.pixels[:8])
            more = "" if len(self.pixels) <= 8 else f" and {len(self.pixels) - 8} more"
            message = f"fewer than 2 spikes at {len(self.pixels)} pixel(s): {head}{more}"
        super().__init__(message)


class DegenerateInterval(SpikeFieldError, ValueError):
    pass


class TraceMismatch(SpikeFieldError, ValueError):
    pass


class NegativeIntensity(SpikeFieldError, ValueError):
    pass


class NegativeDensity(SpikeFieldError, ValueError):
    pass


class CacheMismatch(SpikeFieldError, ValueError):
    pass


class ShapeMismatch(SpikeFieldError, ValueError):
    pass


class IndivisibleSteps(SpikeFieldError, ValueError):
    pass


class DatasetEmpty(SpikeFieldError, ValueError):
    pass


class NonFiniteLoss(SpikeFieldError, FloatingPointError):
    """Training produced a NaN/inf loss; ``diagnostic`` describes the offending ray."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class TooSmall(SpikeFieldError, ValueError):
    pass
