"""Exception types raised across the package."""


class DegreeLevelError(Exception):
    """Base class for all package errors."""


class FormatError(DegreeLevelError, ValueError):
    """A data file does not follow its documented format."""

    def __init__(self, message: str, line: int | None = None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class UnknownLevel(DegreeLevelError, KeyError):
    def __str__(self):
        return f"unknown degree level: {self.args[0]!r}"


class InvalidDirection(DegreeLevelError, ValueError):
    """Collapsing towards a finer grade was requested."""


class EmptyLabelSet(DegreeLevelError, ValueError):
    pass


class InvalidDistance(DegreeLevelError, ValueError):
    pass


class DimensionMismatch(FormatError):
    pass


class InvalidConfig(DegreeLevelError, ValueError):
    pass


class EmptySequence(DegreeLevelError, ValueError):
    pass


class GradeMismatch(DegreeLevelError, ValueError):
    pass


class EmptyDataset(DegreeLevelError, ValueError):
    pass


class VersionMismatch(DegreeLevelError, ValueError):
    pass


class LengthMismatch(DegreeLevelError, ValueError):
    pass


class TooFewSamples(DegreeLevelError, ValueError):
    pass


class EmptyDb(DegreeLevelError, ValueError):
    pass
