"""Run and artifact identity.

Runs are keyed by the hash of their resolved config text, so the same
config always maps to the same hash. Artifacts on disk are told apart
by their leading magic bytes.
"""

import hashlib
from enum import Enum
from pathlib import Path
from typing import Optional


class ArtifactKind(str, Enum):
    """Kinds of file the tools write."""
    CHECKPOINT = "checkpoint"
    VIDEO = "video"
    MANIFEST = "manifest"
    CACHE_SPILL = "cache_spill"
    CONFIG = "config"


MAGICS: dict[bytes, ArtifactKind] = {
    b"HPDMCKPT": ArtifactKind.CHECKPOINT,
    b"HPDMVID0": ArtifactKind.VIDEO,
    b"HPDM-MANIFEST": ArtifactKind.MANIFEST,
    b"HPDMCACH": ArtifactKind.CACHE_SPILL,
}


def hash_text(text: str) -> str:
    """Generate a short hash from a string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def detect_artifact(path: Path) -> Optional[ArtifactKind]:
    """Guess what ``path`` holds from its first bytes (or suffix for configs)."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(16)
    for magic, kind in MAGICS.items():
        if head.startswith(magic):
            return kind
    if path.suffix in (".cfg", ".json"):
        return ArtifactKind.CONFIG
    return None
