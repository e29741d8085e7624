"""Shared builders for the CLI and acceptance tests."""
import hashlib
import math
from pathlib import Path

import numpy as np

from svcaug.audio_io import write_wav
from svcaug.manifest import ManifestEntry, write_manifest
from svcaug.synth import vowel

ACCEPTANCE_RESULTS = []


def embedding_with_similarity(target: np.ndarray, sim: float, rng) -> np.ndarray:
    """Unit vector at cosine `sim` to `target` (Gram-Schmidt against a random direction)."""
    t = target / np.linalg.norm(target)
    r = rng.normal(size=t.shape)
    r -= np.dot(r, t) * t
    r /= np.linalg.norm(r)
    return sim * t + math.sqrt(1 - sim ** 2) * r


def write_style_corpus(root: Path, speakers=("s1", "s2", "s3", "s4"), per_style: int = 4):
    """Two prosodic styles: 'calm' (flat, quiet) and 'excited' (higher, wide vibrato, loud)."""
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    t = np.arange(16000) / 16000
    for si, spk in enumerate(speakers):
        base = 110.0 + 35.0 * si
        for style in ("calm", "excited"):
            for k in range(per_style):
                if style == "calm":
                    contour = base * (1 + 0.01 * np.sin(2 * np.pi * 2 * t + k))
                    amp = 0.15
                else:
                    contour = base * 1.35 * (1 + 0.12 * np.sin(2 * np.pi * 5 * t + k))
                    amp = 0.7
                path = root / f"{spk}_{style}_{k}.wav"
                write_wav(vowel(contour, amp=amp), path)
                entries.append(ManifestEntry(f"{spk}_{style}_{k}", path, spk, style, "source_expressive"))
    write_manifest(entries, root / "manifest.jsonl")
    return root / "manifest.jsonl", entries


def tree_digest(*roots: Path, exclude=()) -> dict:
    out = {}
    for root in roots:
        for p in sorted(Path(root).rglob("*")):
            if p.is_file() and not any(part in exclude for part in p.parts):
                out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def clean_siblings(root: Path) -> None:
    for pattern in ("*.f0.csv", "*.f0.key", "*.f0m.csv", "*.f0m.wav"):
        for p in Path(root).rglob(pattern):
            p.unlink()
