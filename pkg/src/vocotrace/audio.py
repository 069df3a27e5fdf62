"""Mono 16-bit PCM WAV input/output and the in-memory waveform type."""
from __future__ import annotations

import logging
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyAudioError, FormatError, UnsupportedFormatError

log = logging.getLogger(__name__)

SAMPLE_RATE = 24000
_INT16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class Waveform:
    """Immutable mono waveform.

    ``samples`` are stored as a read-only float64 array. Amplitudes are
    nominally in [-1, 1] but perturbations may exceed that range; the clamp
    happens only when writing to disk.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    source_id: str | None = None

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64).reshape(-1)
        if x.size == 0:
            raise EmptyAudioError("waveform has no samples")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def replace(self, samples: np.ndarray) -> Waveform:
        """Same rate and label, new samples."""
        return Waveform(samples, self.sample_rate, self.source_id)


def read_wav(path: str | Path) -> Waveform:
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            n_frames = fh.getnframes()
            payload = fh.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        # the stdlib reports unknown format tags as wave.Error too
        if "unknown format" in str(exc):
            raise UnsupportedFormatError(f"{path}: {exc}") from exc
        raise FormatError(f"{path}: {exc}") from exc
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels} channels, only mono is supported")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, only 16-bit PCM is supported")
    if len(payload) != n_frames * 2:
        raise FormatError(f"{path}: data chunk holds {len(payload)} bytes, header promises {n_frames * 2}")
    if n_frames == 0:
        raise EmptyAudioError(f"{path}: no samples")
    pcm = np.frombuffer(payload, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / _INT16_SCALE, rate)


def to_pcm16(samples: np.ndarray) -> tuple[np.ndarray, int]:
    """Quantise to int16 with clamping; also returns how many samples clipped."""
    x = np.asarray(samples, dtype=np.float64)
    clipped = int(np.count_nonzero((x > 1.0) | (x < -1.0)))
    q = np.rint(np.clip(x, -1.0, 1.0) * _INT16_SCALE)
    return np.clip(q, -32768, 32767).astype("<i2"), clipped


def write_wav(w: Waveform, path: str | Path) -> None:
    if len(w) == 0:  # unreachable for validated waveforms, kept for duck-typed input
        raise EmptyAudioError("refusing to write empty audio")
    pcm, clipped = to_pcm16(w.samples)
    if clipped:
        log.warning("write_wav %s: clamped %d samples outside [-1, 1]", path, clipped)
    # open the file first: wave.open on a bad path leaves a half-built
    # writer whose __del__ raises
    with open(path, "wb") as raw, wave.open(raw, "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())


def measure_power(w: Waveform | np.ndarray) -> float:
    """Mean-square power of the samples."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if x.size == 0:
        raise EmptyAudioError("cannot measure power of empty audio")
    return float(np.dot(x, x) / x.size)
