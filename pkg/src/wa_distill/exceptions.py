"""Exception types shared across the toolkit."""


class WADistillError(Exception):
    """Base class for all toolkit-specific failures."""


class NormalizerUnavailable(WADistillError):
    """The termination-mass system is singular; total string mass per state
    cannot be computed by matrix inversion."""


class DegeneratePrefix(WADistillError):
    """A prefix carries zero or negative continuation mass, so no conditional
    next-symbol distribution exists for it."""


class DegenerateHankel(WADistillError):
    """The Hankel block has numerical rank zero; nothing can be extracted."""


class BasisExhausted(WADistillError):
    """Basis sampling stopped making progress before reaching the requested
    prefix/suffix counts."""


class CapabilityMissing(WADistillError):
    """An optional oracle capability (next-symbol distribution, sampling) was
    requested but is not provided."""


class OracleTransportError(WADistillError):
    """Wire-protocol failure while talking to an external oracle: connection
    loss, timeout, malformed or error reply.  Carries the offending line when
    one exists."""

    def __init__(self, message: str, line: str | None = None):
        if line is not None:
            message = f"{message}: {line!r}"
        super().__init__(message)
        self.line = line


class ParseError(WADistillError):
    """Malformed input file.  Carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no
