"""
File-catalog workspace.

    <root>/manifest.json          index of every committed artifact
    <root>/<kind>/<id>/...        artifact files, plus run.json (its RunConfig)

Artifacts are written first and committed to the manifest afterwards; the
manifest itself is replaced atomically, so it never references a file that
does not exist.
"""
import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from errors import ArtifactNotFoundError, ConfigError, ManifestError

logger = logging.getLogger(__name__)

ARTIFACT_KINDS = ("spec", "image-set", "sinogram", "volume", "model", "feature-map", "report", "run")
MANIFEST_NAME = "manifest.json"


class ManifestEntry(BaseModel):
    id: str
    kind: str
    paths: List[str]                                    # relative to the workspace root
    digest: str                                         # RunConfig digest
    parents: List[str] = Field(default_factory=list)
    created: str = ""
    meta: Dict = Field(default_factory=dict)

    def path(self, root: Path, name: str) -> Path:
        for p in self.paths:
            if Path(p).name == name:
                return root / p
        raise ArtifactNotFoundError(f"{self.id} has no file '{name}'")


def artifact_id(kind: str, digest: str) -> str:
    return f"{kind}-{digest[:12]}"


class Workspace:
    """Single-writer catalog of specs, images, volumes, models and reports."""

    def __init__(self, root: Union[str, Path, None] = None):
        self.root = Path(root or config.WORKSPACE_ROOT)
        self.root.mkdir(parents=True, exist_ok=True)

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    # ── reading ──

    def load(self) -> Dict[str, ManifestEntry]:
        if not self.manifest_path.exists():
            return {}
        try:
            raw = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ManifestError(f"corrupt manifest {self.manifest_path}: {e}")
        return {item["id"]: ManifestEntry.model_validate(item) for item in raw.get("entries", [])}

    def entries(self, kind: Optional[str] = None) -> List[ManifestEntry]:
        return [e for e in self.load().values() if kind is None or e.kind == kind]

    def get(self, artifact: str, kind: Optional[str] = None) -> ManifestEntry:
        entry = self.load().get(artifact)
        if entry is None:
            raise ArtifactNotFoundError(f"artifact '{artifact}' not in workspace {self.root}")
        if kind is not None and entry.kind != kind:
            raise ConfigError(f"artifact '{artifact}' is a {entry.kind}, expected {kind}")
        return entry

    def file(self, entry: ManifestEntry, name: str) -> Path:
        return entry.path(self.root, name)

    def cached(self, kind: str, digest: str) -> Optional[ManifestEntry]:
        """Committed entry with this digest whose files all still exist."""
        entry = self.load().get(artifact_id(kind, digest))
        if entry is None or entry.digest != digest:
            return None
        if not all((self.root / p).exists() for p in entry.paths):
            return None
        return entry

    # ── writing ──

    def artifact_dir(self, kind: str, artifact: str) -> Path:
        if kind not in ARTIFACT_KINDS:
            raise ValueError(f"Unknown artifact kind: {kind}. Available: {list(ARTIFACT_KINDS)}")
        path = self.root / kind / artifact
        path.mkdir(parents=True, exist_ok=True)
        return path

    def relative(self, path: Path) -> str:
        return Path(path).resolve().relative_to(self.root.resolve()).as_posix()

    def commit(self, entry: ManifestEntry) -> ManifestEntry:
        """Add or replace `entry` after checking its files and parents exist."""
        missing = [p for p in entry.paths if not (self.root / p).exists()]
        if missing:
            raise ManifestError(f"refusing to commit {entry.id}: missing files {missing}")
        entries = self.load()
        unknown = [p for p in entry.parents if p not in entries]
        if unknown:
            raise ManifestError(f"refusing to commit {entry.id}: unknown parents {unknown}")
        if not entry.created:
            entry = entry.model_copy(update={"created": datetime.now(timezone.utc).isoformat()})
        entries[entry.id] = entry
        self._write(entries)
        logger.info(f"已登记 {entry.kind} 工件: {entry.id}")
        return entry

    def _write(self, entries: Dict[str, ManifestEntry]):
        payload = {"version": 1, "entries": [e.model_dump(mode="json") for e in entries.values()]}
        tmp = self.manifest_path.with_suffix(f".tmp-{os.getpid()}")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, ensure_ascii=False)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self.manifest_path)

    # ── provenance ──

    def lineage(self, artifact: str) -> List[ManifestEntry]:
        """The entry and all its ancestors, depth-first."""
        entries = self.load()
        seen, order, stack = set(), [], [artifact]
        while stack:
            current = stack.pop()
            if current in seen:
                continue
            if current not in entries:
                raise ArtifactNotFoundError(f"artifact '{current}' not in workspace {self.root}")
            seen.add(current)
            order.append(entries[current])
            stack.extend(reversed(entries[current].parents))
        return order

    def verify(self) -> List[str]:
        """Problems found: missing files, dangling parents, reports not traceable to a spec."""
        problems = []
        entries = self.load()
        for entry in entries.values():
            for p in entry.paths:
                if not (self.root / p).exists():
                    problems.append(f"{entry.id}: missing file {p}")
            for parent in entry.parents:
                if parent not in entries:
                    problems.append(f"{entry.id}: unknown parent {parent}")
        for entry in entries.values():
            if entry.kind not in ("report", "run"):
                continue
            try:
                kinds = {e.kind for e in self.lineage(entry.id)}
            except ArtifactNotFoundError as e:
                problems.append(f"{entry.id}: broken lineage ({e})")
                continue
            if "spec" not in kinds and "volume" not in kinds:
                problems.append(f"{entry.id}: lineage does not reach a specimen spec")
        return problems
