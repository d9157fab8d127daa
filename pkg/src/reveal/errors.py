"""Exception hierarchy. Parse failures are values (see ``reveal.parser``), not exceptions."""

from __future__ import annotations


class RevealError(Exception):
    pass


class ConfigError(RevealError):
    pass


class ManifestError(RevealError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class TransportError(RevealError):
    def __init__(self, message: str, status: int | None = None, attempts: int = 0):
        self.status = status
        self.attempts = attempts
        super().__init__(message)


class CacheError(RevealError):
    pass


class ReportError(RevealError):
    pass


class OverlayError(ValueError, RevealError):
    pass


class DegenerateRocError(ValueError, RevealError):
    pass
