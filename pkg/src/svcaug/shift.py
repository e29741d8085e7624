"""Waveform pitch shifting: WSOLA time stretch followed by band-limited resampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer, interpolate
from .pitch import BufferTooShort


@dataclass(frozen=True)
class ShiftConfig:
    semitones: float = 0.0
    wsola_window: int = 512
    wsola_tolerance: int = 160

    def __post_init__(self):
        if self.wsola_window < 4 or self.wsola_window % 2:
            raise ValueError("wsola_window must be an even number >= 4")
        if not 0 <= self.wsola_tolerance < self.wsola_window / 2:
            raise ValueError("need 0 <= wsola_tolerance < wsola_window / 2")

    @property
    def factor(self) -> float:
        return 2.0 ** (self.semitones / 12.0)


def _best_offset(template: np.ndarray, region: np.ndarray, tolerance: int) -> int:
    """Offset in [-tol, tol] maximizing normalized cross-correlation; ties go to the smallest |offset|."""
    n = len(template)
    corr = np.correlate(region, template, mode="valid")
    sq = np.concatenate([[0.0], np.cumsum(region ** 2)])
    energy = sq[n:] - sq[:-n]
    t_norm = np.sqrt(np.dot(template, template))
    denom = np.sqrt(np.maximum(energy, 0.0)) * t_norm
    score = np.where(denom > 1e-12, corr / np.where(denom > 1e-12, denom, 1.0), 0.0)
    offsets = np.arange(-tolerance, tolerance + 1)
    best = score.max()
    cands = offsets[score >= best - 1e-12]
    return int(cands[np.argmin(np.abs(cands) * 2 + (cands > 0))])


def wsola_stretch(samples: np.ndarray, factor: float, window: int = 512, tolerance: int = 160) -> np.ndarray:
    """Time-stretch to round(len * factor) samples without changing pitch.

    Hann windows at 50% overlap; each analysis frame may move up to `tolerance`
    samples from its nominal position to best continue the previous frame.
    """
    x = np.asarray(samples, dtype=np.float64)
    n_out = int(round(len(x) * factor))
    hop_s = window // 2
    hop_a = hop_s / factor
    half = window // 2
    pad = window + tolerance
    n_frames = int(np.ceil(n_out / hop_s)) + 1
    tail = int(np.ceil((n_frames + 1) * hop_a)) + pad + window
    xp = np.concatenate([np.zeros(pad), x, np.zeros(max(tail - len(x), 0) + pad)])
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(window) / window)

    y = np.zeros(n_out + 2 * pad + window)
    wsum = np.zeros_like(y)
    prev = None
    for k in range(n_frames):
        nominal = pad + int(round(k * hop_a)) - half
        if prev is None:
            start = nominal
        else:
            natural = xp[prev + hop_s: prev + hop_s + window]
            region = xp[nominal - tolerance: nominal + tolerance + window]
            start = nominal + _best_offset(natural, region, tolerance)
        out_at = pad + k * hop_s - half
        y[out_at: out_at + window] += win * xp[start: start + window]
        wsum[out_at: out_at + window] += win
        prev = start
    y = y[pad: pad + n_out]
    wsum = wsum[pad: pad + n_out]
    return y / np.where(wsum > 1e-6, wsum, 1.0)


def pitch_shift(buffer: AudioBuffer, config: ShiftConfig) -> AudioBuffer:
    """Shift pitch by `config.semitones`, keeping the sample count unchanged."""
    n = len(buffer)
    if n <= 2 * config.wsola_window:
        raise BufferTooShort(f"{n} samples; pitch_shift needs more than {2 * config.wsola_window}")
    stretched = wsola_stretch(buffer.samples, config.factor, config.wsola_window, config.wsola_tolerance)
    y = interpolate(stretched, len(stretched) / n, n)
    peak = np.max(np.abs(y)) if n else 0.0
    if peak > 1.0:
        y = y / peak
    return AudioBuffer(y, buffer.sample_rate)
