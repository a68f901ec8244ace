"""
Exception hierarchy for radisynth.

ValidationFailure covers bad inputs (CLI exit code 1); RuntimeFailure covers
failures while doing valid work (exit code 2).
"""
from typing import List, Optional, Tuple


class RadisynthError(Exception):
    """Base class for all pipeline errors."""


class ValidationFailure(RadisynthError):
    exit_code = 1


class RuntimeFailure(RadisynthError):
    exit_code = 2


# ── validation ────────────────────────────────────────────────────────

class ConfigError(ValidationFailure, ValueError):
    pass


class ShapeError(ValidationFailure, ValueError):
    pass


class UnsupportedConstructError(ValidationFailure, ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{message} (at {path})" if path else message)
        self.path = path


class ContainmentError(ValidationFailure, ValueError):
    pass


class TopologyError(ValidationFailure, ValueError):
    def __init__(self, message: str, boundary_edges: Optional[List[Tuple[int, int]]] = None):
        self.boundary_edges = list(boundary_edges or [])
        shown = self.boundary_edges[:10]
        suffix = f"; boundary edges {shown}" if shown else ""
        if len(self.boundary_edges) > 10:
            suffix += f" ... ({len(self.boundary_edges)} total)"
        super().__init__(message + suffix)


class StlParseError(ValidationFailure, ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class DegenerateDataError(ValidationFailure, ValueError):
    pass


class SamplingError(ValidationFailure, ValueError):
    def __init__(self, message: str, available: Optional[dict] = None):
        self.available = dict(available or {})
        super().__init__(f"{message}; available {self.available}" if self.available else message)


class DegenerateFitError(ValidationFailure, ValueError):
    pass


class InsufficientCoverageError(ValidationFailure, ValueError):
    pass


# ── runtime ───────────────────────────────────────────────────────────

class PackingError(RuntimeFailure):
    def __init__(self, message: str, achieved: int, requested: int):
        super().__init__(f"{message}: placed {achieved}/{requested} pores")
        self.achieved = achieved
        self.requested = requested


class DegenerateHitError(RuntimeFailure):
    pass


class ArtifactNotFoundError(RuntimeFailure, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "artifact not found"


class ManifestError(RuntimeFailure):
    pass


class StageError(RuntimeFailure):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
