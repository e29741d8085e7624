"""WAV ingestion/emission, band-limited resampling and frame grids."""
from __future__ import annotations

import logging
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

ANALYSIS_RATE = 16000

KAISER_BETA = 8.6
TAPS_PER_PHASE = 64
# larger interpolation factors fall back to computing the kernel per output sample
_MAX_TABLE_PHASES = 4096
_CHUNK = 1 << 15

_FMT_PCM = 0x0001
_FMT_FLOAT = 0x0003
_FMT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    pass


class UnsupportedEncoding(WavError):
    pass


class MalformedHeader(WavError):
    pass


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        x = np.array(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrameGrid:
    """Centered frames: frame i spans [origin + i*hop - L/2, origin + i*hop + L/2)."""

    frame_length: int
    hop_length: int
    origin: int = 0

    def __post_init__(self):
        if not 0 < self.hop_length <= self.frame_length:
            raise ValueError("need 0 < hop_length <= frame_length")

    def n_frames(self, n_samples: int) -> int:
        if n_samples <= self.origin:
            return 0
        return 1 + (n_samples - 1 - self.origin) // self.hop_length

    def centers(self, n_samples: int) -> np.ndarray:
        return self.origin + self.hop_length * np.arange(self.n_frames(n_samples))

    def frames(self, samples: np.ndarray) -> np.ndarray:
        """(n_frames, frame_length) matrix; samples outside the signal read as zero."""
        x = np.asarray(samples, dtype=np.float64)
        n = self.n_frames(len(x))
        half = self.frame_length // 2
        left = max(0, half - self.origin)
        right = self.frame_length
        padded = np.concatenate([np.zeros(left), x, np.zeros(right)])
        start = self.origin - half + left
        idx = start + self.hop_length * np.arange(n)[:, None] + np.arange(self.frame_length)[None, :]
        return padded[idx]


def read_wav(path) -> AudioBuffer:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader(f"{path}: not a RIFF/WAVE file")
    riff_size = struct.unpack_from("<I", data, 4)[0]
    if riff_size + 8 > len(data):
        raise MalformedHeader(f"{path}: RIFF size {riff_size} exceeds file length {len(data)}")
    end = riff_size + 8

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= end:
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if body + size > end:
            raise MalformedHeader(f"{path}: chunk {cid!r} overruns the file")
        if cid == b"fmt ":
            if size < 16:
                raise MalformedHeader(f"{path}: fmt chunk too short")
            fmt = data[body:body + size]
        elif cid == b"data":
            payload = data[body:body + size]
        pos = body + size + (size & 1)
    if fmt is None or payload is None:
        raise MalformedHeader(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _FMT_EXTENSIBLE:
        if len(fmt) < 26:
            raise MalformedHeader(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels < 1 or rate < 1 or block_align != channels * bits // 8:
        raise MalformedHeader(f"{path}: inconsistent fmt fields")
    if tag == _FMT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _FMT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedEncoding(f"{path}: format tag {tag:#06x} with {bits} bits is not supported")

    n = len(payload) // block_align
    raw = np.frombuffer(payload[:n * block_align], dtype=dtype).reshape(n, channels)
    x = raw.astype(np.float64).mean(axis=1) * scale
    if tag == _FMT_FLOAT:
        x = np.clip(np.nan_to_num(x), -1.0, 1.0)
    return AudioBuffer(x, rate)


def _atomic_write(path: Path, payload: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_wav(buffer: AudioBuffer, path) -> int:
    """Write mono PCM16. Returns the number of samples clipped to [-1, 1]."""
    x = buffer.samples
    clipped = int(np.count_nonzero(np.abs(x) > 1.0))
    if clipped:
        log.warning("%s: clipped %d sample(s) outside [-1, 1]", path, clipped)
    q = np.clip(np.round(np.clip(x, -1.0, 1.0) * 32768.0), -32768, 32767).astype("<i2")
    body = q.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, _FMT_PCM, 1, buffer.sample_rate,
                                    2 * buffer.sample_rate, 2, 16)
    header += b"data" + struct.pack("<I", len(body))
    _atomic_write(Path(path), header + body)
    return clipped


def _kernel(dist: np.ndarray, cutoff: float, half_width: float) -> np.ndarray:
    """Kaiser-windowed sinc; `cutoff` is relative to the input Nyquist."""
    arg = np.clip(1.0 - (dist / half_width) ** 2, 0.0, None)
    w = np.i0(KAISER_BETA * np.sqrt(arg)) / np.i0(KAISER_BETA)
    return cutoff * np.sinc(cutoff * dist) * w


def _normalized(h: np.ndarray) -> np.ndarray:
    s = h.sum(axis=-1, keepdims=True)
    return h / np.where(np.abs(s) > 1e-12, s, 1.0)


def interpolate(samples: np.ndarray, step: float, n_out: int, taps: int = TAPS_PER_PHASE) -> np.ndarray:
    """Band-limited read of `samples` at positions 0, step, 2*step, ...

    The anti-aliasing cutoff follows the rate change (min(1, 1/step) of Nyquist).
    Each output uses `taps` input samples around its position.
    """
    x = np.asarray(samples, dtype=np.float64)
    cutoff = min(1.0, 1.0 / step)
    half = taps // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    offs = np.arange(-half + 1, half + 1)
    out = np.empty(n_out)
    for lo in range(0, n_out, _CHUNK):
        pos = np.arange(lo, min(lo + _CHUNK, n_out)) * step
        base = np.floor(pos).astype(np.int64)
        k = base[:, None] + offs[None, :]
        h = _normalized(_kernel(pos[:, None] - k, cutoff, half))
        valid = (k >= 0) & (k < len(x))
        vals = padded[np.clip(k + half, 0, len(padded) - 1)]
        out[lo:lo + len(pos)] = np.sum(np.where(valid, vals, 0.0) * h, axis=1)
    return out


def _polyphase(x: np.ndarray, up: int, down: int, n_out: int) -> np.ndarray:
    half = TAPS_PER_PHASE // 2
    cutoff = min(1.0, up / down)
    offs = np.arange(-half + 1, half + 1)
    frac = np.arange(up)[:, None] / up
    table = _normalized(_kernel(frac - offs[None, :], cutoff, half))
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    out = np.empty(n_out)
    for lo in range(0, n_out, _CHUNK):
        n = np.arange(lo, min(lo + _CHUNK, n_out), dtype=np.int64) * down
        base, phase = np.divmod(n, up)
        k = base[:, None] + offs[None, :]
        out[lo:lo + len(n)] = np.sum(padded[np.clip(k + half, 0, len(padded) - 1)] * table[phase], axis=1)
    return out


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    if int(target_rate) != target_rate or target_rate <= 0:
        raise ValueError(f"target_rate must be a positive integer, got {target_rate!r}")
    target_rate = int(target_rate)
    src = buffer.sample_rate
    if target_rate == src:
        return buffer
    g = math.gcd(src, target_rate)
    up, down = target_rate // g, src // g
    n_out = int(round(len(buffer) * target_rate / src))
    if up <= _MAX_TABLE_PHASES:
        y = _polyphase(buffer.samples, up, down, n_out)
    else:
        y = interpolate(buffer.samples, src / target_rate, n_out)
    return AudioBuffer(y, target_rate)


def load_for_analysis(path, rate: int = ANALYSIS_RATE) -> AudioBuffer:
    return resample(read_wav(path), rate)
