"""LFCC front end: framing, power spectrum, linear filterbank and DCT.

The pipeline used by :func:`extract_lfcc` is fixed::

    Hamming frames (480 / 240) -> |rfft 512|^2 -> 40 linear triangles
    -> log(. + 1e-10) -> orthonormal DCT-II, keep 20 -> pad/truncate to 500 rows

No pre-emphasis, no deltas and no mean normalisation are applied.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np
import scipy.fft

from .audio import Waveform
from .errors import ConfigError, FormatError, TooShortError

WIN_LENGTH = 480
HOP_LENGTH = 240
N_FFT = 512
N_FILTERS = 40
N_LFCC = 20
N_FRAMES = 500
LOG_FLOOR = 1e-10

DSP_CONFIG = {
    "win_length": WIN_LENGTH,
    "hop_length": HOP_LENGTH,
    "n_fft": N_FFT,
    "n_filters": N_FILTERS,
    "n_lfcc": N_LFCC,
    "n_frames": N_FRAMES,
    "log_floor": LOG_FLOOR,
    "window": "hamming",
}


def dsp_config_hash() -> str:
    blob = json.dumps(DSP_CONFIG, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class FrameMatrix:
    frames: np.ndarray  # T x M, already windowed
    win_length: int
    hop_length: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True, eq=False)
class LfccMatrix:
    coeffs: np.ndarray  # N_FRAMES x N_LFCC
    true_frames: int


def hamming(m: int) -> np.ndarray:
    n = np.arange(m)
    if m == 1:
        return np.ones(1)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (m - 1))


def n_frames_for(n_samples: int, win_length: int, hop_length: int) -> int:
    return (n_samples - win_length) // hop_length + 1


def frame_and_window(w: Waveform | np.ndarray, win_length: int = WIN_LENGTH,
                     hop_length: int = HOP_LENGTH) -> FrameMatrix:
    """Split into complete, Hamming-windowed frames (no partial last frame)."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if win_length <= 0 or not 0 < hop_length <= win_length:
        raise ConfigError(f"need 0 < hop <= win, got win={win_length} hop={hop_length}")
    if x.size < win_length:
        raise TooShortError(f"{x.size} samples is shorter than one {win_length}-sample window")
    t = n_frames_for(x.size, win_length, hop_length)
    view = np.lib.stride_tricks.sliding_window_view(x, win_length)[::hop_length][:t]
    return FrameMatrix(view * hamming(win_length), win_length, hop_length)


def power_spectrum(f: FrameMatrix | np.ndarray, n_fft: int = N_FFT) -> np.ndarray:
    """Per-frame |DFT|^2 of the zero-padded frame, bins 0..n_fft/2.

    Unnormalised convention: summing |X_k|^2 over all n_fft bins equals
    ``n_fft * sum(x**2)``.
    """
    frames = f.frames if isinstance(f, FrameMatrix) else np.atleast_2d(f)
    m = frames.shape[1]
    if n_fft < m or n_fft & (n_fft - 1):
        raise ConfigError(f"n_fft must be a power of two >= {m}, got {n_fft}")
    spec = np.fft.rfft(frames, n=n_fft, axis=1)
    return spec.real**2 + spec.imag**2


def filter_centers(n_filters: int, fs: float) -> np.ndarray:
    return np.linspace(0.0, fs / 2.0, n_filters)


def filterbank_matrix(n_filters: int, n_bins: int, fs: float) -> np.ndarray:
    """n_filters x n_bins triangular weights.

    Centres are evenly spaced from 0 to fs/2 and each triangle reaches zero at
    its neighbours' centres. Rows are normalised to unit sum, so a flat
    spectrum maps to the same energy in every band.
    """
    if n_filters < 2:
        raise ConfigError(f"need at least 2 filters, got {n_filters}")
    n_fft = 2 * (n_bins - 1)
    freqs = np.arange(n_bins) * fs / n_fft
    centers = filter_centers(n_filters, fs)
    width = centers[1] - centers[0]
    weights = np.maximum(0.0, 1.0 - np.abs(freqs[None, :] - centers[:, None]) / width)
    return weights / weights.sum(axis=1, keepdims=True)


def linear_filterbank(spec: np.ndarray, n_filters: int = N_FILTERS, fs: float = 24000.0) -> np.ndarray:
    """Log energies of a linear triangular filterbank, floor ``LOG_FLOOR``."""
    spec = np.atleast_2d(spec)
    fb = filterbank_matrix(n_filters, spec.shape[1], fs)
    return np.log(spec @ fb.T + LOG_FLOOR)


def dct_reduce(fb: np.ndarray, n_keep: int = N_LFCC) -> np.ndarray:
    fb = np.atleast_2d(fb)
    if n_keep > fb.shape[1]:
        raise ConfigError(f"cannot keep {n_keep} of {fb.shape[1]} coefficients")
    return scipy.fft.dct(fb, type=2, norm="ortho", axis=1)[:, :n_keep]


def lfcc_frames(w: Waveform | np.ndarray, fs: float | None = None) -> np.ndarray:
    """Unpadded T x 20 LFCC matrix."""
    if fs is None:
        fs = w.sample_rate if isinstance(w, Waveform) else 24000.0
    frames = frame_and_window(w, WIN_LENGTH, HOP_LENGTH)
    return dct_reduce(linear_filterbank(power_spectrum(frames, N_FFT), N_FILTERS, fs), N_LFCC)


def fix_length(coeffs: np.ndarray, n_frames: int = N_FRAMES) -> np.ndarray:
    out = np.zeros((n_frames, coeffs.shape[1]), dtype=coeffs.dtype)
    keep = min(n_frames, coeffs.shape[0])
    out[:keep] = coeffs[:keep]
    return out


def extract_lfcc(w: Waveform | np.ndarray) -> LfccMatrix:
    coeffs = lfcc_frames(w)
    return LfccMatrix(fix_length(coeffs), min(coeffs.shape[0], N_FRAMES))


# -- feature cache -----------------------------------------------------------
# record: b"LFCC" | version u32 | true_frames u32 | reserved u32 | 500x20 <f4

CACHE_MAGIC = b"LFCC"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_PAYLOAD_BYTES = N_FRAMES * N_LFCC * 4


def write_record(fh: BinaryIO, m: LfccMatrix) -> None:
    if m.coeffs.shape != (N_FRAMES, N_LFCC):
        raise FormatError(f"cache records are {N_FRAMES}x{N_LFCC}, got {m.coeffs.shape}")
    fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, m.true_frames, 0))
    fh.write(np.ascontiguousarray(m.coeffs, dtype="<f4").tobytes())


def read_record(fh: BinaryIO) -> LfccMatrix | None:
    head = fh.read(_HEADER.size)
    if not head:
        return None
    if len(head) != _HEADER.size:
        raise FormatError("truncated LFCC record header")
    magic, version, true_frames, _ = _HEADER.unpack(head)
    if magic != CACHE_MAGIC:
        raise FormatError(f"bad LFCC magic {magic!r}")
    if version != CACHE_VERSION:
        raise FormatError(f"unsupported LFCC cache version {version}")
    payload = fh.read(_PAYLOAD_BYTES)
    if len(payload) != _PAYLOAD_BYTES:
        raise FormatError("truncated LFCC record payload")
    coeffs = np.frombuffer(payload, dtype="<f4").reshape(N_FRAMES, N_LFCC).astype(np.float32)
    return LfccMatrix(coeffs, true_frames)


def save_features(path: str | Path, matrices: Iterable[LfccMatrix]) -> int:
    n = 0
    with open(path, "wb") as fh:
        for m in matrices:
            write_record(fh, m)
            n += 1
    return n


def iter_features(path: str | Path) -> Iterator[LfccMatrix]:
    with open(path, "rb") as fh:
        while (m := read_record(fh)) is not None:
            yield m


def load_features(path: str | Path) -> np.ndarray:
    """All records of a cache file stacked into an N x 500 x 20 float32 array."""
    mats = [m.coeffs for m in iter_features(path)]
    if not mats:
        return np.zeros((0, N_FRAMES, N_LFCC), np.float32)
    return np.stack(mats)
