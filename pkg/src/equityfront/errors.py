class EquityFrontError(Exception):
    pass


class ParameterError(EquityFrontError, ValueError):
    """An instance or generation parameter violates an invariant."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.detail = message
        super().__init__(f"{field}: {message}")

    def __reduce__(self):
        return (type(self), (self.field, self.detail))


class InstanceFormatError(EquityFrontError, ValueError):
    """An instance file could not be parsed; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.detail = message
        super().__init__(f"{field}: {message}")

    def __reduce__(self):
        return (type(self), (self.field, self.detail))


class SizeLimitError(EquityFrontError):
    """A subset is too large for exhaustive tour enumeration (or a bitmask overflows)."""


class CacheMismatchError(EquityFrontError):
    pass
