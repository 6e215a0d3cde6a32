"""Exception hierarchy shared by every subpackage."""


class DNTSCError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DNTSCError, ValueError):
    pass


class InputError(DNTSCError, ValueError):
    pass


class ParameterError(DNTSCError, ValueError):
    pass


class ConfigurationError(DNTSCError, ValueError):
    pass


class DecodeError(DNTSCError):
    """Raised when a bitstream is truncated, corrupted or inconsistent."""


class FramingError(DecodeError):
    """Channel vector segment lengths disagree with the rate plan."""


class DegenerateProjectionError(DNTSCError, ArithmeticError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TrainingError(DNTSCError, RuntimeError):
    def __init__(self, message, components=None):
        super().__init__(message)
        self.components = dict(components or {})


class IngestionError(DNTSCError):
    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class CheckpointError(DNTSCError):
    pass
