"""Speaker-level F0 statistics, semitone offsets toward a target speaker, curve transposition."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .audio_io import _atomic_write
from .pitch import F0Curve

STATS_CSV_HEADER = ["speaker_id", "mean_of_means_hz", "utterance_count", "skipped_count"]


class NonPositiveFrequency(ValueError):
    pass


class TargetStatsEmpty(ValueError):
    pass


@dataclass(frozen=True)
class SpeakerF0Stats:
    speaker_id: str
    mean_of_means_f0: float
    utterance_count: int
    skipped_count: int = 0

    @property
    def usable(self) -> bool:
        return self.utterance_count > 0


@dataclass
class TranspositionPlan:
    target_speaker: str
    offsets: dict[str, float]
    stats: list[SpeakerF0Stats] = field(default_factory=list)
    omitted: list[str] = field(default_factory=list)

    def offset(self, speaker_id: str) -> float:
        try:
            return self.offsets[speaker_id]
        except KeyError:
            raise KeyError(f"speaker {speaker_id!r} is not covered by the plan") from None

    def to_json(self) -> str:
        doc = {
            "target": self.target_speaker,
            "offsets": {k: round(v, 4) for k, v in sorted(self.offsets.items())},
            "stats": [
                {
                    "speaker_id": s.speaker_id,
                    "mean_of_means_hz": round(s.mean_of_means_f0, 6),
                    "utterance_count": s.utterance_count,
                    "skipped_count": s.skipped_count,
                }
                for s in self.stats
            ],
            "omitted": sorted(self.omitted),
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TranspositionPlan":
        doc = json.loads(text)
        stats = [
            SpeakerF0Stats(s["speaker_id"], float(s["mean_of_means_hz"]),
                           int(s["utterance_count"]), int(s.get("skipped_count", 0)))
            for s in doc.get("stats", [])
        ]
        offsets = {str(k): float(v) for k, v in doc["offsets"].items()}
        return cls(str(doc["target"]), offsets, stats, list(doc.get("omitted", [])))

    def save(self, path) -> None:
        _atomic_write(Path(path), self.to_json().encode())

    @classmethod
    def load(cls, path) -> "TranspositionPlan":
        return cls.from_json(Path(path).read_text())


def speaker_stats(means: Iterable[tuple[str, Optional[float]]]) -> list[SpeakerF0Stats]:
    """Unweighted mean of per-utterance means, grouped by speaker (sorted by id).

    Absent utterance means only bump `skipped_count`. Sums use math.fsum so the
    result does not depend on utterance order.
    """
    present: dict[str, list[float]] = defaultdict(list)
    skipped: dict[str, int] = defaultdict(int)
    for speaker, m in means:
        if m is None:
            skipped[speaker] += 1
            present.setdefault(speaker, [])
        else:
            present[speaker].append(float(m))
    out = []
    for speaker in sorted(present):
        vals = present[speaker]
        mean = math.fsum(vals) / len(vals) if vals else 0.0
        out.append(SpeakerF0Stats(speaker, mean, len(vals), skipped[speaker]))
    return out


def semitone_distance(target_mean: float, source_mean: float) -> float:
    """Signed semitones that take `source_mean` to `target_mean`: 12*log2(target/source)."""
    if not (target_mean > 0 and source_mean > 0):
        raise NonPositiveFrequency(f"frequencies must be positive, got {target_mean!r}, {source_mean!r}")
    return 12.0 * math.log2(target_mean / source_mean)


def round_half_away(x: float) -> float:
    return float(math.copysign(math.floor(abs(x) + 0.5), x))


def build_plan(target_stats: SpeakerF0Stats, source_stats: Iterable[SpeakerF0Stats],
               round_semitones: bool = False) -> TranspositionPlan:
    if not target_stats.usable:
        raise TargetStatsEmpty(f"target speaker {target_stats.speaker_id!r} has no usable utterances")
    offsets = {target_stats.speaker_id: 0.0}
    omitted = []
    stats = [target_stats]
    for s in source_stats:
        if s.speaker_id == target_stats.speaker_id:
            continue
        stats.append(s)
        if not s.usable:
            omitted.append(s.speaker_id)
            continue
        d = semitone_distance(target_stats.mean_of_means_f0, s.mean_of_means_f0)
        offsets[s.speaker_id] = round_half_away(d) if round_semitones else d
    stats.sort(key=lambda s: s.speaker_id)
    return TranspositionPlan(target_stats.speaker_id, offsets, stats, omitted)


def transpose_curve(curve: F0Curve, semitones: float) -> F0Curve:
    factor = 2.0 ** (semitones / 12.0)
    return F0Curve(curve.hop_seconds, np.where(curve.voiced, curve.f0 * factor, 0.0),
                   curve.voiced, curve.periodicity)


def stats_to_csv(stats: Iterable[SpeakerF0Stats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_CSV_HEADER)
    for s in stats:
        w.writerow([s.speaker_id, f"{s.mean_of_means_f0:.6f}", s.utterance_count, s.skipped_count])
    return buf.getvalue()


def read_stats_csv(path) -> list[SpeakerF0Stats]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [SpeakerF0Stats(r["speaker_id"], float(r["mean_of_means_hz"]),
                           int(r["utterance_count"]), int(r["skipped_count"])) for r in rows]
