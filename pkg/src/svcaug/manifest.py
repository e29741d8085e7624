"""JSON-lines dataset manifests and the run configuration."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path
from typing import Iterable, Optional

from .audio_io import ANALYSIS_RATE, _atomic_write
from .pitch import PitchConfig
from .stylefilter import TrainConfig

ROLES = ("source_expressive", "source_neutral", "target_neutral", "converted")
NEUTRAL = "neutral"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    path: Path
    speaker_id: str
    style: str = NEUTRAL
    dataset_role: str = "source_neutral"

    def to_record(self, base: Optional[Path] = None) -> dict:
        p = Path(os.path.relpath(self.path, base)) if base is not None else self.path
        return {
            "utterance_id": self.utterance_id,
            "path": p.as_posix(),
            "speaker_id": self.speaker_id,
            "style": self.style,
            "dataset_role": self.dataset_role,
        }

    def sibling(self, suffix: str) -> Path:
        """`x.wav` -> `x<suffix>` in the same directory."""
        return self.path.with_name(self.path.stem + suffix)


def _entry(rec: dict, base: Path, lineno: int) -> ManifestEntry:
    try:
        uid, path, spk = str(rec["utterance_id"]), str(rec["path"]), str(rec["speaker_id"])
    except KeyError as e:
        raise ManifestError(f"line {lineno}: missing field {e.args[0]!r}") from None
    style = str(rec.get("style") or NEUTRAL)
    role = str(rec.get("dataset_role", "source_neutral"))
    if role not in ROLES:
        raise ManifestError(f"line {lineno}: unknown dataset_role {role!r}")
    if not path.lower().endswith(".wav"):
        raise ManifestError(f"line {lineno}: path must end in .wav: {path}")
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    return ManifestEntry(uid, p, spk, style, role)


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    base = path.parent.resolve()
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"line {lineno}: {e.msg}") from None
            e = _entry(rec, base, lineno)
            if e.utterance_id in seen:
                raise ManifestError(f"line {lineno}: duplicate utterance_id {e.utterance_id!r}")
            seen.add(e.utterance_id)
            entries.append(e)
    return entries


def manifest_text(entries: Iterable[ManifestEntry], base: Path) -> str:
    return "".join(json.dumps(e.to_record(base), ensure_ascii=False) + "\n" for e in entries)


def write_manifest(entries: Iterable[ManifestEntry], path) -> None:
    """Paths are written relative to the manifest's own directory."""
    path = Path(path)
    _atomic_write(path, manifest_text(entries, path.parent.resolve()).encode("utf-8"))


@dataclass(frozen=True)
class ShiftSettings:
    wsola_window: int = 512
    wsola_tolerance: int = 160


@dataclass(frozen=True)
class RunConfig:
    analysis_rate: int = ANALYSIS_RATE
    pitch: PitchConfig = field(default_factory=PitchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    shift: ShiftSettings = field(default_factory=ShiftSettings)
    neutral_only: bool = True
    round_semitones: bool = False
    out: str = "out"
    jobs: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        nested = {"pitch": PitchConfig, "train": TrainConfig, "shift": ShiftSettings}
        for key, typ in nested.items():
            if key in doc:
                doc[key] = typ(**doc[key])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})
