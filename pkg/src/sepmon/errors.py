"""Exception types raised across the package."""


class SepmonError(Exception):
    """Base class for all errors raised by sepmon."""


class DegenerateCorrespondences(SepmonError):
    """Calibration points are collinear/coplanar, so the fit is not unique."""


class JointCountMismatch(SepmonError):
    pass


class BadLinkIndex(SepmonError):
    pass


class EmptyModel(SepmonError):
    pass


class UnknownKeypoint(SepmonError, KeyError):
    """A keypoint name has no entry in a table or threshold matrix."""

    def __init__(self, name, where=""):
        self.name = name
        self.where = where
        msg = f"unknown keypoint {name!r}"
        if where:
            msg += f" in {where}"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class ConfigError(SepmonError):
    """Invalid configuration; ``path`` is the dotted location of the bad field."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ParseError(SepmonError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class NonMonotonicTime(ParseError):
    def __init__(self, line, reason="time decreases"):
        super().__init__(line, reason)


class ReplayExhausted(SepmonError):
    """The replay trace ends before the scenario duration."""
