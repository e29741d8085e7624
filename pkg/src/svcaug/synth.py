"""Synthetic test signals with known F0."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio_io import ANALYSIS_RATE, AudioBuffer, write_wav
from .manifest import ManifestEntry, write_manifest

DEFAULT_FORMANTS = ((700.0, 110.0), (1220.0, 120.0), (2600.0, 160.0))


def _time(duration: float, sr: int) -> np.ndarray:
    return np.arange(int(round(duration * sr))) / sr


def sine(f0: float, duration: float = 1.0, sr: int = ANALYSIS_RATE, amp: float = 0.5,
         phase: float = 0.0) -> AudioBuffer:
    return AudioBuffer(amp * np.sin(2 * np.pi * f0 * _time(duration, sr) + phase), sr)


def sawtooth(f0: float, duration: float = 1.0, sr: int = ANALYSIS_RATE, amp: float = 0.5) -> AudioBuffer:
    """Band-limited sawtooth (all harmonics below Nyquist, 1/k amplitudes)."""
    t = _time(duration, sr)
    k = np.arange(1, int((sr / 2) // f0) + 1)
    coef = (2 / np.pi) * (-1.0) ** (k + 1) / k
    x = np.zeros_like(t)
    for kk, c in zip(k, coef):
        x += c * np.sin(2 * np.pi * f0 * kk * t)
    return AudioBuffer(amp * x, sr)


def _resonance_gain(freq: np.ndarray, formants) -> np.ndarray:
    g = np.ones_like(freq)
    for fc, bw in formants:
        g *= fc ** 2 / np.sqrt((fc ** 2 - freq ** 2) ** 2 + (bw * freq) ** 2)
    return g


def vowel(f0, duration: float = 1.0, sr: int = ANALYSIS_RATE, formants=DEFAULT_FORMANTS,
          amp: float = 0.5, tilt_db_per_octave: float = -12.0) -> AudioBuffer:
    """Additive glottal-like source shaped by second-order formant resonances.

    `f0` may be a scalar or a per-sample contour; the phase is integrated so
    contours stay continuous.
    """
    t = _time(duration, sr)
    f0_track = np.broadcast_to(np.asarray(f0, dtype=np.float64), t.shape)
    phase = 2 * np.pi * np.cumsum(f0_track) / sr
    top = float(np.max(f0_track))
    x = np.zeros_like(t)
    for k in range(1, int((sr / 2) // top) + 1):
        hk = k * f0_track
        gain = 2.0 ** (tilt_db_per_octave / 6.0206 * np.log2(k)) * _resonance_gain(hk, formants)
        x += gain * np.sin(k * phase)
    return AudioBuffer(amp * x / np.max(np.abs(x)), sr)


UTTERANCE_SPREAD = (0.94, 1.0, 1.06)


def write_speaker_corpus(root, speaker_f0: dict, target: str | None = None, spread=UTTERANCE_SPREAD,
                         duration: float = 1.0, vibrato: float = 0.02, style: str = "neutral",
                         sr: int = ANALYSIS_RATE):
    """Write vowel-like utterances per speaker plus `manifest.jsonl`; returns the manifest path.

    Speaker s gets one utterance per factor in `spread` at f0 = speaker_f0[s] * factor,
    with a slow sinusoidal vibrato of relative depth `vibrato`.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    t = np.arange(int(round(duration * sr))) / sr
    for spk in sorted(speaker_f0):
        for i, factor in enumerate(spread):
            f_u = speaker_f0[spk] * factor
            contour = f_u * (1.0 + vibrato * np.sin(2 * np.pi * 3.0 * t + i))
            path = root / spk / f"{spk}_{i:03d}.wav"
            path.parent.mkdir(exist_ok=True)
            write_wav(vowel(contour, duration, sr), path)
            role = "target_neutral" if spk == target else "source_neutral"
            entries.append(ManifestEntry(f"{spk}_{i:03d}", path, spk, style, role))
    manifest = root / "manifest.jsonl"
    write_manifest(entries, manifest)
    return manifest
