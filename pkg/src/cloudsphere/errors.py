"""Exception hierarchy shared by every module."""


class CloudSphereError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(CloudSphereError, ValueError):
    pass


class DegenerateInputError(CloudSphereError, ValueError):
    pass


class UnsupportedSizeError(CloudSphereError, ValueError):
    pass


class EmptyInputError(CloudSphereError, ValueError):
    pass


class FormatError(CloudSphereError, ValueError):
    """Malformed point-cloud or mask file.

    ``line`` is 1-based for text content, ``offset`` is a byte offset for
    binary payloads; either may be None.
    """

    def __init__(self, message, path=None, line=None, offset=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        full = f"{': '.join([', '.join(where), message]) if where else message}"
        super().__init__(full)
        self.path = path
        self.line = line
        self.offset = offset


class OptimizationFailure(CloudSphereError, RuntimeError):
    """Raised when the fit diverges; carries the loss history up to the failure."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []
