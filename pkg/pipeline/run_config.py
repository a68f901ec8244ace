"""
RunConfig: the complete parameter record of one command invocation.

Replaying a RunConfig reproduces its outputs; its digest (threads excluded,
since thread count never changes results) names the produced artifact.
"""
import hashlib
import json
from typing import Any, Dict, List

import numpy as np
from pydantic import BaseModel, Field

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config

RUN_CONFIG_VERSION = 1


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def derive_seed(seed: int, label: str) -> int:
    """Independent 32-bit seed for a labelled sub-stream ("spec", "noise", "init", ...)."""
    key = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:4], "little")
    return int(np.random.SeedSequence(seed, spawn_key=(key,)).generate_state(1)[0])


class RunConfig(BaseModel):
    command: str
    seed: int = config.DEFAULT_SEED
    threads: int = Field(default=config.DEFAULT_THREADS, ge=1)
    params: Dict[str, Any] = Field(default_factory=dict)
    inputs: List[str] = Field(default_factory=list)
    version: int = RUN_CONFIG_VERSION

    def identity(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude={"threads"})

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.identity()).encode("utf-8")).hexdigest()

    def seed_for(self, label: str) -> int:
        return derive_seed(self.seed, f"{self.command}/{label}")

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False)
