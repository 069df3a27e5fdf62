import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vocotrace import perturb as pt
from vocotrace.audio import Waveform, measure_power
from vocotrace.errors import ConfigError, SilentInputError
from vocotrace.manifest import read_manifest
from vocotrace.simsource import make_base_utterance


@pytest.fixture(scope="module")
def speech():
    return make_base_utterance(11, 2.0)


@pytest.mark.parametrize("snr", [0.0, 5.0, 10.0, 20.0])
def test_realised_snr(speech, snr):
    for seed in range(5):
        y = pt.add_noise(speech, snr, seed)
        noise = y.samples - speech.samples
        realised = 10 * np.log10(measure_power(speech) / measure_power(noise))
        assert abs(realised - snr) <= 0.1
        assert len(y) == len(speech)


def test_noise_power_ratio(speech):
    n0 = pt.add_noise(speech, 0.0, 1).samples - speech.samples
    assert measure_power(n0) == pytest.approx(measure_power(speech), rel=0.02)
    n10 = pt.add_noise(speech, 10.0, 1).samples - speech.samples
    assert measure_power(n10) == pytest.approx(measure_power(speech) / 10, rel=0.02)
    a, b = pt.add_noise(speech, 10.0, 3), pt.add_noise(speech, 10.0, 3)
    assert np.array_equal(a.samples, b.samples)


def test_noise_on_silence():
    with pytest.raises(SilentInputError):
        pt.add_noise(Waveform(np.zeros(100)), 10.0, 0)


def test_rir_shape_and_envelope():
    h = pt.make_rir(0.5, 24000, 0)
    assert len(h) == 12000 and h[0] == 1.0
    assert len(pt.make_rir(0.37, 24000, 0)) == math.ceil(0.37 * 24000)
    rt, fs = 0.5, 24000
    env = lambda n: 10.0 ** (-3.0 * n / (rt * fs))  # noqa: E731
    assert env(rt * fs) == pytest.approx(1e-3)
    assert np.array_equal(pt.make_rir(0.5, 24000, 4), pt.make_rir(0.5, 24000, 4))
    with pytest.raises(ConfigError):
        pt.make_rir(3.0, 24000, 0)


def schroeder_oracle(h, fs):
    """Backward integration, then a least-squares line over -5..-25 dB."""
    e = h.astype(np.float64) ** 2
    tail = np.zeros_like(e)
    acc = 0.0
    for i in range(len(e) - 1, -1, -1):
        acc += e[i]
        tail[i] = acc
    db = 10 * np.log10(tail / tail[0])
    sel = np.flatnonzero((db <= -5) & (db >= -25))
    t = sel / fs
    A = np.vstack([t, np.ones_like(t)]).T
    slope = np.linalg.lstsq(A, db[sel], rcond=None)[0][0]
    return -60.0 / slope


@pytest.mark.parametrize("rt60", [0.5, 1.0, 1.5])
def test_schroeder_rt60(rt60):
    for seed in range(3):
        h = pt.make_rir(rt60, 24000, seed)
        est = schroeder_oracle(h, 24000)
        assert abs(est - rt60) <= 0.05 * rt60
        assert pt.schroeder_rt60(h, 24000) == pytest.approx(est, rel=1e-9)


def test_reverb_identities(rng):
    x = Waveform(rng.standard_normal(500) * 0.1)
    np.testing.assert_allclose(pt.apply_rir(x, np.array([1.0])).samples, x.samples, atol=1e-15)
    imp = np.zeros(20000)
    imp[0] = 0.5
    h = pt.make_rir(0.5, 24000, 2)
    y = pt.apply_rir(Waveform(imp), h).samples
    want = np.zeros(20000)
    want[: len(h)] = h * 0.5 / np.max(np.abs(h))
    np.testing.assert_allclose(y, want, atol=1e-12)


def test_reverb_vs_naive_convolution(rng):
    x = rng.standard_normal(32) * 0.2
    h = rng.standard_normal(9)
    naive = np.array([sum(x[k] * h[n - k] for k in range(n + 1) if n - k < len(h)) for n in range(32)])
    naive *= np.max(np.abs(x)) / np.max(np.abs(naive))
    assert np.max(np.abs(pt.apply_rir(Waveform(x), h).samples - naive)) < 1e-9
    y = pt.add_reverb(Waveform(x), 0.5, 0)
    assert len(y) == 32


def test_speed_identity_and_length(speech):
    y = pt.adjust_speed(speech, 1.0)
    assert len(y) == len(speech)
    assert np.max(np.abs(y.samples - speech.samples)) < 1e-6
    assert abs(len(pt.adjust_speed(Waveform(np.zeros(24000) + 0.1), 1.1)) - 21818) <= 1
    with pytest.raises(ConfigError):
        pt.adjust_speed(speech, 1.5)


@given(st.integers(1000, 6000), st.floats(0.8, 1.25))
def test_speed_length_law(n, factor):
    y = pt.adjust_speed(Waveform(np.sin(np.arange(n) * 0.01)), factor)
    assert abs(len(y) - n / factor) <= 1


def test_speed_shifts_pitch():
    fs, n = 24000, 24000
    tone = Waveform(0.5 * np.sin(2 * np.pi * 440 * np.arange(n) / fs))
    y = pt.adjust_speed(tone, 0.9).samples
    spec = np.abs(np.fft.rfft(y))
    peak_hz = np.argmax(spec) * fs / len(y)
    assert abs(peak_hz - 396.0) <= fs / len(y)


def test_spec_validation():
    with pytest.raises(ConfigError):
        pt.PerturbSpec("noise", snr_db=25)
    with pytest.raises(ConfigError):
        pt.PerturbSpec("reverb")
    with pytest.raises(ConfigError):
        pt.PerturbSpec("echo")
    s = pt.PerturbSpec("speed", speed_factor=0.9, seed=7)
    assert s.label == "0.9x" and s.to_dict() == {"kind": "speed", "speed_factor": 0.9, "seed": 7}


def test_perturb_manifest_touches_only_test(tmp_path):
    from vocotrace.config import config_from_dict
    from vocotrace.simsource import synth_corpus
    cfg = config_from_dict({"experiment_id": "T", "label_axis": "vocoder", "duration": 1.0,
                            "n_per_source": {"train": 2, "val": 1, "test": 2},
                            "sources": {"train": ["P0", "H0"]}})
    m = synth_corpus(cfg, tmp_path / "c")
    spec = pt.PerturbSpec("noise", snr_db=10, seed=7)
    pm = pt.perturb_manifest(m, spec, tmp_path / "p")
    assert [e.utterance_id for e in pm.entries] == [e.utterance_id for e in m.entries]
    for a, b in zip(m.entries, pm.entries):
        if a.split == "test":
            assert pm.resolve(b).parent == tmp_path / "p" / "wav"
            assert pm.resolve(b).read_bytes() != m.resolve(a).read_bytes()
        else:
            assert pm.resolve(b).read_bytes() == m.resolve(a).read_bytes()
    again = read_manifest(tmp_path / "p" / "manifest.jsonl")
    assert len(again.entries) == len(m.entries)
    (tmp_path / "c" / m.entries[-1].path).unlink()
    with pytest.raises(OSError):
        pt.perturb_manifest(m, spec, tmp_path / "q")
