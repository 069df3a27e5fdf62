"""Test-time perturbations: white noise at an SNR, reverberation, speed change."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from . import _kernels
from .audio import Waveform, measure_power, read_wav, write_wav
from .errors import ConfigError, SilentInputError
from .manifest import CorpusManifest, ManifestEntry, write_manifest
from .simsource import derive_seed

SNR_RANGE = (0.0, 20.0)
RT60_RANGE = (0.1, 2.0)
SPEED_RANGE = (0.8, 1.25)
SINC_ZERO_CROSSINGS = 16


@dataclass(frozen=True)
class PerturbSpec:
    kind: str  # noise | reverb | speed
    snr_db: float | None = None
    rt60: float | None = None
    speed_factor: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind == "noise":
            _check_range("snr_db", self.snr_db, SNR_RANGE)
        elif self.kind == "reverb":
            _check_range("rt60", self.rt60, RT60_RANGE)
        elif self.kind == "speed":
            _check_range("speed_factor", self.speed_factor, SPEED_RANGE)
        else:
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")

    @property
    def value(self) -> float:
        return {"noise": self.snr_db, "reverb": self.rt60, "speed": self.speed_factor}[self.kind]

    @property
    def label(self) -> str:
        if self.kind == "noise":
            return f"SNR={self.snr_db:g}dB"
        if self.kind == "reverb":
            return f"RT={self.rt60:g}s"
        return f"{self.speed_factor:g}x"

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def apply(self, w: Waveform, seed: int | None = None) -> Waveform:
        seed = self.seed if seed is None else seed
        if self.kind == "noise":
            return add_noise(w, self.snr_db, seed)
        if self.kind == "reverb":
            return add_reverb(w, self.rt60, seed)
        return adjust_speed(w, self.speed_factor)


def _check_range(name, value, bounds):
    if value is None:
        raise ConfigError(f"{name} is required for this perturbation")
    lo, hi = bounds
    if not lo <= value <= hi:
        raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")


def add_noise(w: Waveform, snr_db: float, seed: int) -> Waveform:
    """Add Gaussian white noise whose realised power sits exactly at ``snr_db``."""
    p_signal = measure_power(w)
    if p_signal <= 0.0:
        raise SilentInputError("cannot set an SNR on a silent signal")
    noise = np.random.default_rng(seed).standard_normal(len(w))
    noise *= math.sqrt(p_signal / 10.0 ** (snr_db / 10.0) / measure_power(noise))
    return w.replace(w.samples + noise)


def make_rir(rt60: float, fs: int, seed: int) -> np.ndarray:
    """Exponentially decaying Gaussian tail with a unit direct path.

    The amplitude envelope ``10 ** (-3 n / (rt60 fs))`` is down 60 dB at
    ``n = rt60 * fs``, where the response is cut.
    """
    _check_range("rt60", rt60, RT60_RANGE)
    length = math.ceil(rt60 * fs)
    n = np.arange(length)
    h = np.random.default_rng(seed).standard_normal(length) * 10.0 ** (-3.0 * n / (rt60 * fs))
    h[0] = 1.0
    return h


def schroeder_rt60(h: np.ndarray, fs: int, fit_db: tuple[float, float] = (-5.0, -25.0)) -> float:
    """RT60 from a line fit to the backward-integrated energy decay curve."""
    energy = np.cumsum((h**2)[::-1])[::-1]
    edc = 10.0 * np.log10(energy / energy[0])
    hi, lo = fit_db
    idx = np.nonzero((edc <= hi) & (edc >= lo))[0]
    if idx.size < 2:
        raise ValueError("decay curve too short for the requested fit range")
    slope, _ = np.polyfit(idx / fs, edc[idx], 1)
    return -60.0 / slope


def apply_rir(w: Waveform, h: np.ndarray) -> Waveform:
    """Convolve, keep the original length, restore the original peak level."""
    x = w.samples
    y = fftconvolve(x, h)[: x.size]
    peak_in, peak_out = np.max(np.abs(x)), np.max(np.abs(y))
    if peak_out > 0:
        y = y * (peak_in / peak_out)
    return w.replace(y)


def add_reverb(w: Waveform, rt60: float, seed: int) -> Waveform:
    return apply_rir(w, make_rir(rt60, w.sample_rate, seed))


def adjust_speed(w: Waveform, factor: float) -> Waveform:
    """Resampling speed change: tempo and pitch both scale by ``factor``."""
    _check_range("speed_factor", factor, SPEED_RANGE)
    n_out = int(round(len(w) / factor))
    cutoff = min(1.0, 1.0 / factor)
    y = _kernels.sinc_resample(w.samples, factor, n_out, cutoff, SINC_ZERO_CROSSINGS)
    return w.replace(y)


def perturb_manifest(m: CorpusManifest, spec: PerturbSpec, out_dir: str | Path) -> CorpusManifest:
    """Perturb only the test split; train/val entries keep pointing at the originals."""
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    entries = []
    for e in m.entries:
        if e.split != "test":
            entries.append(ManifestEntry(e.utterance_id, str(m.resolve(e).resolve()), e.acoustic_label,
                                         e.vocoder_label, e.split))
            continue
        w = read_wav(m.resolve(e))
        y = spec.apply(w, derive_seed(spec.seed, spec.kind, e.utterance_id))
        rel = f"wav/{e.utterance_id}.wav"
        write_wav(y, out_dir / rel)
        entries.append(ManifestEntry(e.utterance_id, rel, e.acoustic_label, e.vocoder_label, e.split))
    out = CorpusManifest(entries, m.seed, out_dir)
    write_manifest(out, out_dir / "manifest.jsonl")
    return out
