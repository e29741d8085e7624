"""Speaker-similarity evaluation: mean embeddings, cosine similarity vs. semitone distance."""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .audio_io import _atomic_write
from .f0match import TranspositionPlan

EMB_MAGIC = b"F0ME"
SIMILARITY_CSV_HEADER = ["speaker_id", "abs_semitones", "sim_matched", "sim_unmatched"]


class EmptyInput(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class ZeroNormEmbedding(ValueError):
    pass


class MissingSpeakerInPlan(KeyError):
    pass


@dataclass(frozen=True)
class SimilarityRow:
    speaker_id: str
    semitone_distance_to_target: float
    f0_matched: bool
    cosine_similarity: float
    sample_count: int

    @property
    def abs_semitones(self) -> float:
        return abs(self.semitone_distance_to_target)


def _stack(embeddings: Sequence) -> np.ndarray:
    if len(embeddings) == 0:
        raise EmptyInput("no embeddings")
    dims = {len(np.ravel(e)) for e in embeddings}
    if len(dims) != 1:
        raise DimensionMismatch(f"embedding dimensions differ: {sorted(dims)}")
    return np.array([np.ravel(e) for e in embeddings], dtype=np.float64)


def mean_embedding(embeddings: Sequence) -> np.ndarray:
    return _stack(embeddings).mean(axis=0)


def cosine_similarity(a, b) -> float:
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroNormEmbedding("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a / na, b / nb), -1.0, 1.0))


def build_similarity_report(target_embs: Sequence, per_speaker_embs: Mapping[str, Sequence],
                            plan: TranspositionPlan, f0_matched: bool,
                            mode: str = "mean-then-cosine") -> list[SimilarityRow]:
    """One row per speaker, sorted by (|semitone distance|, speaker_id).

    `mode="cosine-then-mean"` averages per-utterance cosines against the target
    mean instead of taking the cosine of the speaker mean.
    """
    if mode not in ("mean-then-cosine", "cosine-then-mean"):
        raise ValueError(f"unknown mode {mode!r}")
    missing = sorted(s for s in per_speaker_embs if s not in plan.offsets)
    if missing:
        raise MissingSpeakerInPlan(f"speakers missing from plan: {', '.join(missing)}")
    target = mean_embedding(target_embs)
    rows = []
    for speaker, embs in per_speaker_embs.items():
        stacked = _stack(embs)
        if stacked.shape[1] != len(target):
            raise DimensionMismatch(f"speaker {speaker!r} dimension {stacked.shape[1]} != target {len(target)}")
        if mode == "mean-then-cosine":
            sim = cosine_similarity(stacked.mean(axis=0), target)
        else:
            sim = math.fsum(cosine_similarity(e, target) for e in stacked) / len(stacked)
        rows.append(SimilarityRow(speaker, plan.offsets[speaker], f0_matched, sim, len(stacked)))
    rows.sort(key=lambda r: (r.abs_semitones, r.speaker_id))
    return rows


def _merge(rows_matched, rows_unmatched) -> list[tuple[str, float, Optional[float], Optional[float]]]:
    by_spk: dict[str, list] = {}
    for r in rows_matched:
        by_spk.setdefault(r.speaker_id, [r.abs_semitones, None, None])[1] = r.cosine_similarity
    for r in rows_unmatched:
        by_spk.setdefault(r.speaker_id, [r.abs_semitones, None, None])[2] = r.cosine_similarity
    if rows_matched and rows_unmatched and {r.speaker_id for r in rows_matched} != {
            r.speaker_id for r in rows_unmatched}:
        raise ValueError("matched and unmatched reports cover different speakers")
    merged = [(spk, v[0], v[1], v[2]) for spk, v in by_spk.items()]
    merged.sort(key=lambda m: (m[1], m[0]))
    return merged


def similarity_csv(merged) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIMILARITY_CSV_HEADER)
    fmt = lambda v: "" if v is None else f"{v:.9f}"
    for spk, d, sm, su in merged:
        w.writerow([spk, f"{d:.4f}", fmt(sm), fmt(su)])
    return buf.getvalue()


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def similarity_svg(merged, width: int = 800, height: int = 500) -> str:
    """Scatter of similarity vs. speaker rank (ascending |semitones|), two series."""
    left, right, top, bottom = 70, 170, 40, 70
    pw, ph = width - left - right, height - top - bottom
    vals = [v for m in merged for v in m[2:] if v is not None]
    y_lo = min(0.0, math.floor(min(vals) * 10) / 10) if vals else 0.0
    y_hi = 1.0
    n = len(merged)

    def xpos(i):
        return left + (i + 0.5) * pw / max(n, 1)

    def ypos(v):
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    steps = int(round((y_hi - y_lo) / 0.1))
    for k in range(steps + 1):
        v = y_lo + k * 0.1
        y = ypos(v)
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{v:.1f}</text>')
    for i, (spk, d, _, _) in enumerate(merged):
        x = xpos(i)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" font-size="10" text-anchor="middle">'
                   f'{_esc(spk)}</text>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 30}" font-size="9" text-anchor="middle" '
                   f'fill="gray">{d:.2f}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 15}" font-size="12" text-anchor="middle">'
               f'speaker (ascending |semitone distance| to target)</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.1f})">cosine similarity to target</text>')
    series = (("matched", 2, "#1f77b4", "with F0 matching"), ("unmatched", 3, "#d62728", "without F0 matching"))
    for name, col, color, _ in series:
        for i, m in enumerate(merged):
            if m[col] is not None:
                out.append(f'<circle class="{name}" cx="{xpos(i):.2f}" cy="{ypos(m[col]):.2f}" r="5" '
                           f'fill="{color}"/>')
    lx = left + pw + 20
    for k, (name, _, color, text) in enumerate(series):
        y = top + 10 + 20 * k
        out.append(f'<rect x="{lx}" y="{y - 5}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{lx + 16}" y="{y + 4}" font-size="11">{text}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(rows_matched: Sequence[SimilarityRow], rows_unmatched: Sequence[SimilarityRow], out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    merged = _merge(rows_matched, rows_unmatched)
    _atomic_write(out_dir / "similarity.csv", similarity_csv(merged).encode())
    _atomic_write(out_dir / "similarity.svg", similarity_svg(merged).encode())


def write_embeddings(path, embeddings: np.ndarray) -> None:
    """Binary layout: b'F0ME', u32 dim, u32 count, then count*dim little-endian float32."""
    e = np.atleast_2d(np.asarray(embeddings, dtype="<f4"))
    count, dim = e.shape
    _atomic_write(Path(path), EMB_MAGIC + struct.pack("<II", dim, count) + e.tobytes())


def read_embeddings(path) -> np.ndarray:
    """Read the binary format, or the CSV fallback `utterance_id,v0,v1,...` (header optional)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == EMB_MAGIC:
        if len(data) < 12:
            raise ValueError(f"{path}: truncated header")
        dim, count = struct.unpack_from("<II", data, 4)
        need = 12 + 4 * dim * count
        if len(data) != need:
            raise ValueError(f"{path}: expected {need} bytes, found {len(data)}")
        return np.frombuffer(data, dtype="<f4", offset=12).reshape(count, dim).astype(np.float64)
    rows = []
    for row in csv.reader(io.StringIO(data.decode("utf-8"))):
        if not row:
            continue
        try:
            rows.append([float(v) for v in row[1:]])
        except ValueError:
            if rows:
                raise
            continue  # header
    if not rows:
        return np.zeros((0, 0))
    return np.array(_stack(rows))
