"""Exception hierarchy shared by every stage of the reconstruction engine."""

from __future__ import annotations


class ReconError(Exception):
    """Base class for all engine errors."""


class ShapeError(ReconError, ValueError):
    """Frame or tensor dimensions disagree."""


class InvalidArgumentError(ReconError, ValueError):
    pass


class BehindCameraError(ReconError, ValueError):
    pass


class DomainError(ReconError, ValueError):
    pass


class WeightsError(ReconError, ValueError):
    pass


class ConfigError(ReconError):
    pass


class FormatError(ReconError):
    """Malformed input file.

    Carries the byte ``offset`` for binary formats or the 1-based ``line``
    for text formats, whichever applies.
    """

    def __init__(self, message: str, *, offset: int | None = None, line: int | None = None):
        where = []
        if offset is not None:
            where.append(f"byte {offset}")
        if line is not None:
            where.append(f"line {line}")
        full = f"{message} ({', '.join(where)})" if where else message
        super().__init__(full)
        self.offset = offset
        self.line = line


class CaptureError(ReconError):
    """A capture cannot be replayed (missing file, empty manifest, bad pose line)."""

    def __init__(self, message: str, *, frame_index: int | None = None):
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)
        self.frame_index = frame_index


class StageError(ReconError):
    """A pipeline stage failed; the grid keeps its pre-frame state."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
