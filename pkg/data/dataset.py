"""
Dataset directories: images/*.pgm plus manifest.jsonl.

Each manifest line is {"id": ..., "path": ..., "label": ...} with path
relative to the dataset root, so external datasets can be dropped in.
"""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd

from core.constants import IMAGES_DIR, MANIFEST_NAME
from core.models import Sample
from data.pgm import load_pgm, save_pgm


def write_dataset(samples: list[Sample], root: Path) -> Path:
    """Write images and manifest under root; returns the manifest path."""
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for sample in samples:
        rel = f"{IMAGES_DIR}/{sample.id}.pgm"
        save_pgm(root / rel, sample.image)
        lines.append(json.dumps({"id": sample.id, "path": rel, "label": sample.label}))
    manifest = root / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_manifest(root: Path) -> pd.DataFrame:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST_NAME} under {root}")
    return pd.read_json(path, lines=True, dtype={"id": str, "path": str, "label": int})


def read_dataset(root: Path) -> list[Sample]:
    """Load every manifest entry in manifest order."""
    root = Path(root)
    manifest = read_manifest(root)
    return [
        Sample(image=load_pgm(root / row.path), label=int(row.label), id=str(row.id))
        for row in manifest.itertuples(index=False)
    ]


def class_counts(samples: list[Sample]) -> pd.Series:
    """Sample count per ordinal level, sorted by level."""
    return pd.Series([s.label for s in samples], name="count").value_counts().sort_index()
