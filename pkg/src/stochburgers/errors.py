class BlowUpError(FloatingPointError):
    """A trajectory left the floating point range.  Carries the last finite state."""

    def __init__(self, message, time=None, last_state=None):
        super().__init__(message)
        self.time = time
        self.last_state = last_state


class HorizonTooLargeError(RuntimeError):
    """Picard iterates stopped contracting; ``factor`` is the measured ratio."""

    def __init__(self, message, factor):
        super().__init__(message)
        self.factor = factor


class ConfigError(ValueError):
    pass
