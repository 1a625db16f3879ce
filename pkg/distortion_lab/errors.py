"""
Exception hierarchy for distortion-lab.

Every error raised on purpose by the library derives from LabError so the CLI
can map it onto an exit code and a one-line report.
"""
from typing import Optional


class LabError(Exception):
    """Root of all distortion-lab errors."""

    kind = "lab"


class ConfigurationError(LabError, ValueError):
    """Invalid configuration, parameters or shapes."""

    kind = "config"


class InputError(LabError, ValueError):
    """Invalid runtime input such as out-of-range labels or non-finite values."""

    kind = "input"


class FormatError(LabError):
    """A file does not follow its documented format."""

    kind = "format"

    def __init__(self, message: str, path: Optional[str] = None,
                 offset: Optional[int] = None, line: Optional[int] = None):
        self.path = path
        self.offset = offset
        self.line = line
        where = []
        if path is not None:
            where.append(f"path={path}")
        if offset is not None:
            where.append(f"offset={offset}")
        if line is not None:
            where.append(f"line={line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
