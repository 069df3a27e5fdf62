"""Simulated acoustic models and vocoders.

Each simulated model leaves an additive residual on the waveform it
processes::

    out = w + residual_gain * FIR(w) + comb_gain * delay(w, comb_period) + N(0, noise_sigma^2)

The FIR prototype is fixed by the architecture family; the instance seed
jitters every tap by at most 10 %, so instances of one family are close but
distinguishable. Vocoder residuals are larger than acoustic-model residuals
and are always applied last.
"""
from __future__ import annotations

import hashlib
import json
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from scipy.signal import lfilter

from .audio import SAMPLE_RATE, Waveform, write_wav
from .errors import ConfigError
from .manifest import SPLITS, CorpusManifest, ManifestEntry, write_manifest

if TYPE_CHECKING:
    from .config import ExperimentConfig

N_TAPS = 16
TAP_JITTER = 0.10
# Gaussian envelope over the prototype taps
FIR_CENTER = 6.5
FIR_WIDTH = 4.0

# A comb with period P samples ripples the log spectrum with period fs/P,
# which lands on cepstral coefficient ~P; periods stay below N_LFCC so
# the ripple is visible in the features.
VOCODER_FAMILIES = {
    # tag: (architecture, comb period in samples)
    "P": ("Parallel WaveGAN", 6),
    "H": ("HiFiGAN", 8),
    "M": ("Multiband MelGAN", 11),
    "S": ("StyleMelGAN", 15),
}
ACOUSTIC_FAMILIES = {
    "F2": ("FastSpeech 2", 6),
    "GD": ("Grad-TTS", 8),
    "T2": ("Tacotron 2", 15),
}
COPY = "copy"  # copy synthesis: no acoustic-model residual

VOCODER_GAIN = 0.05
VOCODER_COMB_GAIN = 0.04
ACOUSTIC_GAIN = 0.01
ACOUSTIC_COMB_GAIN = 0.012
NOISE_SIGMA = 2e-4
# instance residual / comb gains span [SPREAD * g, g]; instance_seed % 5 picks a
# corner of that square (or its centre for seed 4)
GAIN_SPREAD = 0.35
COMB_SPREAD = 0.2
GAIN_LEVELS = (0.0, 1.0, 1.0, 0.0, 0.5)
COMB_LEVELS = (0.0, 0.0, 1.0, 1.0, 0.5)


def model_hash() -> str:
    """Hash of every constant that shapes a simulated corpus; part of the corpus cache key."""
    consts = {
        "n_taps": N_TAPS, "tap_jitter": TAP_JITTER, "fir": [FIR_CENTER, FIR_WIDTH],
        "vocoders": VOCODER_FAMILIES, "acoustic": ACOUSTIC_FAMILIES,
        "gains": [VOCODER_GAIN, VOCODER_COMB_GAIN, ACOUSTIC_GAIN, ACOUSTIC_COMB_GAIN, NOISE_SIGMA],
        "instances": [GAIN_SPREAD, COMB_SPREAD, GAIN_LEVELS, COMB_LEVELS], "base_rms": BASE_RMS,
    }
    return hashlib.sha256(json.dumps(consts, sort_keys=True).encode()).hexdigest()[:16]


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    blob = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class ResidualSignature:
    fir_taps: tuple[float, ...]
    comb_period: int
    comb_gain: float
    residual_gain: float
    noise_sigma: float

    def __post_init__(self):
        if len(self.fir_taps) != N_TAPS:
            raise ConfigError(f"fir_taps must have {N_TAPS} entries")
        if self.comb_period < 1:
            raise ConfigError("comb_period must be >= 1 sample")
        if not 0.0 <= self.comb_gain <= 0.05:
            raise ConfigError(f"comb_gain {self.comb_gain} outside [0, 0.05]")
        if not (self.residual_gain == 0.0 or 0.001 <= self.residual_gain <= 0.05):
            raise ConfigError(f"residual_gain {self.residual_gain} outside [0.001, 0.05]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")

    @property
    def taps(self) -> np.ndarray:
        return np.asarray(self.fir_taps, dtype=np.float64)


@dataclass(frozen=True)
class SourceSpec:
    kind: str  # "acoustic" | "vocoder"
    family: str
    instance_seed: int
    signature: ResidualSignature = field(compare=False)

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.kind, self.family, self.instance_seed)

    @property
    def model_id(self) -> str:
        return f"{self.family}{self.instance_seed}" if self.kind == "vocoder" else self.family


def family_prototype(kind: str, family: str) -> np.ndarray:
    """Unit-norm FIR prototype, deterministic in the family tag."""
    rng = np.random.default_rng(zlib.crc32(f"{kind}:{family}".encode()))
    # energy in the middle taps keeps the coloration away from the
    # low-quefrency region where the spectral envelope of speech lives
    taps = rng.standard_normal(N_TAPS) * np.exp(-(((np.arange(N_TAPS) - FIR_CENTER) / FIR_WIDTH) ** 2))
    return taps / np.linalg.norm(taps)


def instance_params(kind: str, family: str, instance_seed: int) -> tuple[np.ndarray, float, float]:
    """Jittered taps and (residual, comb) gain multipliers of one instance.

    Each tap moves by exactly +-TAP_JITTER with a seeded sign. The gain
    multipliers cycle through the corners and centre of a square, which keeps
    every pair of instances apart; random draws too often land two instances
    on top of each other.
    """
    proto = family_prototype(kind, family)
    rng = np.random.default_rng(derive_seed("instance", kind, family, instance_seed))
    taps = proto * (1.0 + TAP_JITTER * rng.choice([-1.0, 1.0], N_TAPS))
    level = instance_seed % len(GAIN_LEVELS)
    gain_scale = 1.0 - (1.0 - GAIN_SPREAD) * GAIN_LEVELS[level]
    comb_scale = 1.0 - (1.0 - COMB_SPREAD) * COMB_LEVELS[level]
    return taps, float(gain_scale), float(comb_scale)


def instance_taps(kind: str, family: str, instance_seed: int) -> np.ndarray:
    return instance_params(kind, family, instance_seed)[0]


def make_source(kind: str, family: str, instance_seed: int = 0, **overrides) -> SourceSpec:
    if kind == "vocoder":
        table, gain, comb_gain = VOCODER_FAMILIES, VOCODER_GAIN, VOCODER_COMB_GAIN
    elif kind == "acoustic":
        table, gain, comb_gain = ACOUSTIC_FAMILIES, ACOUSTIC_GAIN, ACOUSTIC_COMB_GAIN
    else:
        raise ConfigError(f"unknown source kind {kind!r}")
    if family not in table:
        raise ConfigError(f"unknown {kind} family {family!r}; expected one of {sorted(table)}")
    taps, gain_scale, comb_scale = instance_params(kind, family, instance_seed)
    if kind == "acoustic":
        gain_scale = comb_scale = 1.0
    params = dict(
        fir_taps=tuple(float(t) for t in taps),
        comb_period=table[family][1],
        comb_gain=comb_gain * comb_scale,
        residual_gain=gain * gain_scale,
        noise_sigma=NOISE_SIGMA,
    )
    params.update(overrides)
    return SourceSpec(kind, family, instance_seed, ResidualSignature(**params))


_VOCODER_ID = re.compile(r"^([A-Z])(\d+)$")


def parse_model(model_id: str) -> SourceSpec | None:
    """``"P1"`` -> vocoder P instance 1, ``"T2"`` -> acoustic model, ``"copy"`` -> None."""
    if model_id == COPY:
        return None
    if model_id in ACOUSTIC_FAMILIES:
        return make_source("acoustic", model_id)
    m = _VOCODER_ID.match(model_id)
    if m and m.group(1) in VOCODER_FAMILIES:
        return make_source("vocoder", m.group(1), int(m.group(2)))
    raise ConfigError(f"unrecognised model id {model_id!r}")


def parse_pipeline(text: str) -> tuple[str, str]:
    """``"T2+P0"`` -> ("T2", "P0"); a bare vocoder id means copy synthesis."""
    parts = [p.strip() for p in text.split("+")]
    if len(parts) == 1:
        parts = [COPY, parts[0]]
    if len(parts) != 2:
        raise ConfigError(f"pipeline {text!r} must look like ACOUSTIC+VOCODER")
    acoustic, vocoder = parts
    a, v = parse_model(acoustic), parse_model(vocoder)
    if a is not None and a.kind != "acoustic":
        raise ConfigError(f"{acoustic!r} is not an acoustic model")
    if v is None or v.kind != "vocoder":
        raise ConfigError(f"{vocoder!r} is not a vocoder")
    return acoustic, vocoder


# -- base utterances ---------------------------------------------------------

def _resonator(freq: float, bw: float, fs: float) -> tuple[np.ndarray, np.ndarray]:
    r = np.exp(-np.pi * bw / fs)
    a = np.array([1.0, -2.0 * r * np.cos(2.0 * np.pi * freq / fs), r * r])
    # unit gain at the resonance frequency
    z = np.exp(-2j * np.pi * freq / fs)
    return np.array([abs(a[0] + a[1] * z + a[2] * z * z)]), a


# (F1, F2, F3) in Hz for a handful of vowel-like targets
VOWELS = np.array([
    [730, 1090, 2440],
    [530, 1840, 2480],
    [270, 2290, 3010],
    [570, 840, 2410],
    [300, 870, 2240],
    [660, 1720, 2410],
])
BASE_RMS = 0.1


def make_base_utterance(seed: int, duration: float = 3.0, fs: int = SAMPLE_RATE) -> Waveform:
    """Deterministic pseudo-speech standing in for a natural recording.

    Source-filter construction: a jittered glottal pulse train with drifting,
    wobbling pitch plus aspiration noise, shaped per syllable by three
    formant resonators; some syllables are unvoiced frication, and short
    pauses separate syllable groups. Every syllable is level-normalised
    before its amplitude envelope is applied, and the result is scaled to a
    fixed RMS (peak capped at 0.9).
    """
    if not 1.0 <= duration <= 10.0:
        raise ConfigError(f"duration must be within [1, 10] s, got {duration}")
    rng = np.random.default_rng(seed)
    n = int(round(duration * fs))
    t = np.arange(n) / fs

    f0_mean = rng.uniform(100.0, 200.0)
    wobble = 0.05 * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    f0 = f0_mean * (1.0 - 0.1 * t / duration) * (1.0 + wobble)
    phase = np.cumsum(f0 / fs)
    pulses = np.diff(np.floor(phase), prepend=0.0) * (1.0 + 0.1 * rng.standard_normal(n))
    aspiration = rng.standard_normal(n)
    voiced_src = lfilter([1.0], [1.0, -0.6], pulses) + 0.08 * aspiration

    out = np.zeros(n)
    pos = int(0.02 * fs)
    while pos < n:
        end = min(n, pos + int(rng.uniform(0.06, 0.14) * fs))
        seg = slice(pos, end)
        if rng.random() < 0.12:
            y = aspiration[seg]
            formants = rng.uniform([2500, 4500, 7000], [3500, 6000, 9500])
            bws = np.array([1500.0, 2000.0, 2500.0])
        else:
            y = voiced_src[seg]
            formants = VOWELS[rng.integers(len(VOWELS))] * rng.uniform(0.92, 1.08, 3)
            bws = rng.uniform([150, 200, 300], [250, 350, 450])
        shaped = y.copy()
        for fr, bw in zip(formants, bws):
            b, a = _resonator(fr, bw, fs)
            shaped = shaped + 2.0 * lfilter(b, a, y)
        rms = np.sqrt(np.mean(shaped**2))
        env = np.sin(np.pi * np.linspace(0.0, 1.0, end - pos)) ** 0.5
        out[seg] = shaped / max(rms, 1e-12) * env
        pos = end
        if rng.random() < 0.08:
            pos += int(rng.uniform(0.03, 0.08) * fs)
    out -= out.mean()
    out *= BASE_RMS / np.sqrt(np.mean(out**2))
    peak = np.max(np.abs(out))
    if peak > 0.9:
        out *= 0.9 / peak
    return Waveform(out, fs)


# -- residual injection ------------------------------------------------------

def residual(w: np.ndarray, sig: ResidualSignature, rng_seed: int) -> np.ndarray:
    r = np.zeros_like(w)
    if sig.residual_gain:
        r += sig.residual_gain * lfilter(sig.taps, [1.0], w)
    if sig.comb_gain:
        delayed = np.zeros_like(w)
        delayed[sig.comb_period:] = w[:-sig.comb_period] if sig.comb_period < w.size else 0.0
        r += sig.comb_gain * delayed
    if sig.noise_sigma:
        r += sig.noise_sigma * np.random.default_rng(rng_seed).standard_normal(w.size)
    return r


def apply_source(w: Waveform, s: SourceSpec, rng_seed: int) -> Waveform:
    x = w.samples
    out = np.clip(x + residual(x, s.signature, rng_seed), -1.0, 1.0)
    return Waveform(out, w.sample_rate, s.model_id)


def render_pipeline(base: Waveform, acoustic: str, vocoder: str, utterance_seed: int) -> Waveform:
    """Acoustic residual first, vocoder residual last."""
    y = base
    a = parse_model(acoustic)
    if a is not None:
        y = apply_source(y, a, derive_seed(utterance_seed, "acoustic"))
    v = parse_model(vocoder)
    y = apply_source(y, v, derive_seed(utterance_seed, "vocoder"))
    return Waveform(y.samples, y.sample_rate, f"{acoustic}+{vocoder}")


# -- corpora -----------------------------------------------------------------

def corpus_plan(cfg: ExperimentConfig) -> list[tuple[ManifestEntry, int, int]]:
    """(entry, base-utterance seed, residual seed) for every utterance of ``cfg``.

    Within a split every pipeline renders the same base utterances (the same
    "texts"); splits never share base utterances or ids.
    """
    plan = []
    for split in SPLITS:
        pipelines = cfg.sources[split]
        if not pipelines:
            raise ConfigError(f"{cfg.experiment_id}: split {split!r} lists no sources")
        seen = set()
        for text in pipelines:
            acoustic, vocoder = parse_pipeline(text)
            if (acoustic, vocoder) in seen:
                raise ConfigError(f"{cfg.experiment_id}: pipeline {acoustic}+{vocoder} listed twice in {split}")
            seen.add((acoustic, vocoder))
            for i in range(cfg.n_per_source[split]):
                uid = f"{split}-{acoustic}+{vocoder}-{i:04d}"
                entry = ManifestEntry(uid, f"wav/{uid}.wav", acoustic, vocoder, split)
                plan.append((entry, derive_seed(cfg.seed, "base", split, i), derive_seed(cfg.seed, uid)))
    return plan


def synth_corpus(cfg: ExperimentConfig, out_dir: str | Path) -> CorpusManifest:
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    bases: dict[int, Waveform] = {}
    split = None
    entries = []
    for entry, base_seed, utt_seed in corpus_plan(cfg):
        if entry.split != split:
            split, bases = entry.split, {}
        if base_seed not in bases:
            bases[base_seed] = make_base_utterance(base_seed, cfg.duration)
        y = render_pipeline(bases[base_seed], entry.acoustic_label, entry.vocoder_label, utt_seed)
        write_wav(y, out_dir / entry.path)
        entries.append(entry)
    manifest = CorpusManifest(entries, cfg.seed, out_dir)
    write_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest
