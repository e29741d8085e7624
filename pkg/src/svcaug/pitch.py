"""Frame-wise F0 estimation with a cumulative-mean-normalized difference function."""
from __future__ import annotations

import io
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .audio_io import AudioBuffer, FrameGrid, _atomic_write

F0_CSV_HEADER = "time_s,f0_hz,voiced,periodicity"


class BufferTooShort(ValueError):
    pass


@dataclass(frozen=True)
class PitchConfig:
    f0_min: float = 50.0
    f0_max: float = 600.0
    frame_length: int = 1024
    hop_length: int = 160
    threshold: float = 0.15
    voicing_threshold: float = 0.85
    min_voiced_frames: int = 10

    def __post_init__(self):
        if not 0 < self.f0_min < self.f0_max:
            raise ValueError("need 0 < f0_min < f0_max")
        if not 0 < self.hop_length <= self.frame_length:
            raise ValueError("need 0 < hop_length <= frame_length")

    def as_dict(self) -> dict:
        return asdict(self)


class F0Frame(NamedTuple):
    time: float
    f0: float
    voiced: bool
    periodicity: float


@dataclass(frozen=True)
class F0Curve:
    """Uniformly spaced F0 frames; frame i sits at time i * hop_seconds.

    Unvoiced frames store f0 = 0.0.
    """

    hop_seconds: float
    f0: np.ndarray
    voiced: np.ndarray
    periodicity: np.ndarray

    def __post_init__(self):
        if self.hop_seconds <= 0:
            raise ValueError("hop_seconds must be positive")
        f0 = np.array(self.f0, dtype=np.float64).reshape(-1)
        voiced = np.array(self.voiced, dtype=bool).reshape(-1)
        per = np.array(self.periodicity, dtype=np.float64).reshape(-1)
        if not (len(f0) == len(voiced) == len(per)):
            raise ValueError("f0, voiced and periodicity must have equal length")
        f0 = np.where(voiced, f0, 0.0)
        for a in (f0, voiced, per):
            a.flags.writeable = False
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "voiced", voiced)
        object.__setattr__(self, "periodicity", per)

    def __len__(self) -> int:
        return len(self.f0)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.hop_seconds

    def frames(self) -> Iterator[F0Frame]:
        for t, f, v, p in zip(self.times, self.f0, self.voiced, self.periodicity):
            yield F0Frame(float(t), float(f), bool(v), float(p))

    @property
    def voiced_count(self) -> int:
        return int(np.count_nonzero(self.voiced))


def _difference(frames: np.ndarray, max_lag: int) -> np.ndarray:
    """d(tau) = sum_j (x_j - x_{j+tau})^2 over the first L - max_lag samples of each frame."""
    n_frames, length = frames.shape
    width = length - max_lag
    nfft = 1 << int(np.ceil(np.log2(length + width)))
    spec_full = np.fft.rfft(frames, nfft, axis=1)
    spec_head = np.fft.rfft(frames[:, :width], nfft, axis=1)
    corr = np.fft.irfft(spec_full * np.conj(spec_head), nfft, axis=1)[:, :max_lag + 1]
    sq = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    lags = np.arange(max_lag + 1)
    energy_shift = sq[:, lags + width] - sq[:, lags]
    energy_head = sq[:, [width]]
    return np.maximum(energy_head + energy_shift - 2.0 * corr, 0.0)


def _cmnd(d: np.ndarray) -> np.ndarray:
    out = np.ones_like(d)
    csum = np.cumsum(d[:, 1:], axis=1)
    lags = np.arange(1, d.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d[:, 1:] * lags / csum
    out[:, 1:] = np.where(csum > 0, ratio, 1.0)
    return out


def _pick_lag(dn: np.ndarray, lo: int, hi: int, threshold: float) -> int:
    below = np.flatnonzero(dn[lo:hi + 1] < threshold)
    if below.size == 0:
        return lo + int(np.argmin(dn[lo:hi + 1]))
    tau = lo + int(below[0])
    while tau < hi and dn[tau + 1] < dn[tau]:
        tau += 1
    return tau


def _refine(d: np.ndarray, tau: int) -> float:
    if tau <= 0 or tau >= len(d) - 1:
        return float(tau)
    a, b, c = d[tau - 1], d[tau], d[tau + 1]
    denom = a - 2.0 * b + c
    if denom <= 0:
        return float(tau)
    shift = 0.5 * (a - c) / denom
    return tau + float(np.clip(shift, -1.0, 1.0))


def estimate_f0(buffer: AudioBuffer, config: PitchConfig = PitchConfig()) -> F0Curve:
    """Per-frame F0, voicing and periodicity on a centered, zero-padded frame grid.

    The lag search covers [sr/f0_max, sr/f0_min]; the trough is chosen by the
    absolute-threshold rule on the normalized difference function and refined by
    a parabola through the raw difference values.
    """
    sr = buffer.sample_rate
    if len(buffer) == 0:
        raise BufferTooShort("empty buffer")
    lo = max(2, int(np.floor(sr / config.f0_max)))
    hi = int(np.ceil(sr / config.f0_min))
    if hi + 2 >= config.frame_length:
        raise ValueError(f"frame_length {config.frame_length} cannot hold lag {hi} for f0_min={config.f0_min}")
    # centered zero-padded frames; anything shorter than a hop has no complete analysis step
    if len(buffer) < config.hop_length:
        raise BufferTooShort(f"{len(buffer)} samples is shorter than one hop ({config.hop_length})")

    grid = FrameGrid(config.frame_length, config.hop_length)
    frames = grid.frames(buffer.samples)
    d = _difference(frames, hi + 1)
    dn = _cmnd(d)

    n = len(frames)
    f0 = np.zeros(n)
    per = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    for i in range(n):
        tau = _pick_lag(dn[i], lo, hi, config.threshold)
        per[i] = float(np.clip(1.0 - dn[i, tau], 0.0, 1.0))
        freq = sr / _refine(d[i], tau)
        ok = per[i] >= config.voicing_threshold and config.f0_min <= freq <= config.f0_max
        if ok:
            f0[i] = freq
            voiced[i] = True
    return F0Curve(config.hop_length / sr, f0, voiced, per)


def utterance_mean_f0(curve: F0Curve, min_voiced_frames: int = 10) -> Optional[float]:
    """Mean F0 over voiced frames, or None when fewer than `min_voiced_frames` are voiced."""
    v = curve.f0[curve.voiced]
    if v.size == 0 or v.size < min_voiced_frames:
        return None
    return float(np.mean(v))


def curve_to_csv(curve: F0Curve) -> str:
    lines = [F0_CSV_HEADER]
    for t, f, v, p in zip(curve.times, curve.f0, curve.voiced, curve.periodicity):
        lines.append(f"{t:.6f},{f:.6f},{int(v)},{p:.6f}")
    return "\n".join(lines) + "\n"


def write_f0_csv(curve: F0Curve, path) -> None:
    _atomic_write(Path(path), curve_to_csv(curve).encode())


def curve_from_csv(text: str) -> F0Curve:
    head, _, body = text.partition("\n")
    if head.strip() != F0_CSV_HEADER:
        raise ValueError(f"unexpected F0 CSV header {head!r}")
    rows = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2) if body.strip() else np.zeros((0, 4))
    hop = float(rows[1, 0] - rows[0, 0]) if len(rows) >= 2 else 0.01
    return F0Curve(hop, rows[:, 1], rows[:, 2] > 0.5, rows[:, 3])


def read_f0_csv(path) -> F0Curve:
    return curve_from_csv(Path(path).read_text())
