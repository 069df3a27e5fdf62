import struct
import wave

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vocotrace.audio import SAMPLE_RATE, Waveform, measure_power, read_wav, write_wav
from vocotrace.errors import EmptyAudioError, FormatError, UnsupportedFormatError


def _write_raw(path, pcm, channels=1, width=2, rate=SAMPLE_RATE):
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(width)
        fh.setframerate(rate)
        fh.writeframes(np.asarray(pcm).tobytes())


def test_read_scaling(tmp_path):
    p = tmp_path / "a.wav"
    _write_raw(p, np.array([0, 32767, -32768, 0], dtype="<i2"))
    w = read_wav(p)
    np.testing.assert_array_equal(w.samples, [0.0, 32767 / 32768, -1.0, 0.0])
    assert w.sample_rate == SAMPLE_RATE


def test_silence(tmp_path):
    p = tmp_path / "s.wav"
    write_wav(Waveform(np.zeros(SAMPLE_RATE)), p)
    w = read_wav(p)
    assert len(w) == 24000 and w.sample_rate == 24000
    assert not w.samples.any()


def test_write_payload_and_clamp(tmp_path):
    p = tmp_path / "h.wav"
    write_wav(Waveform(np.array([0.5, 1.5, -2.0])), p)
    with wave.open(str(p)) as fh:
        pcm = np.frombuffer(fh.readframes(3), "<i2")
    assert pcm.tolist() == [16384, 32767, -32768]


def test_empty_waveform_rejected(tmp_path):
    with pytest.raises(EmptyAudioError):
        write_wav(Waveform(np.array([])), tmp_path / "e.wav")
    assert not (tmp_path / "e.wav").exists()


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        write_wav(Waveform(np.zeros(10)), tmp_path / "missing" / "x.wav")


def test_read_errors(tmp_path):
    stereo = tmp_path / "st.wav"
    _write_raw(stereo, np.zeros(8, "<i2"), channels=2)
    with pytest.raises(UnsupportedFormatError):
        read_wav(stereo)
    eight = tmp_path / "u8.wav"
    _write_raw(eight, np.zeros(8, np.uint8), width=1)
    with pytest.raises(UnsupportedFormatError):
        read_wav(eight)
    empty = tmp_path / "empty.wav"
    _write_raw(empty, np.zeros(0, "<i2"))
    with pytest.raises(EmptyAudioError):
        read_wav(empty)
    junk = tmp_path / "junk.wav"
    junk.write_bytes(b"RIFF\x00\x00\x00\x00WAVEnope")
    with pytest.raises(FormatError):
        read_wav(junk)


def test_float_format_unsupported(tmp_path):
    # IEEE float fmt chunk (tag 3)
    data = np.zeros(4, "<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, 1, SAMPLE_RATE, SAMPLE_RATE * 4, 4, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    p = tmp_path / "f.wav"
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(UnsupportedFormatError):
        read_wav(p)


def test_truncated_data_chunk(tmp_path):
    p = tmp_path / "t.wav"
    _write_raw(p, np.arange(100, dtype="<i2"))
    p.write_bytes(p.read_bytes()[:-10])
    with pytest.raises(FormatError):
        read_wav(p)


@given(arrays(np.float64, st.integers(1, 400), elements=st.floats(-1, 1)))
def test_round_trip(tmp_path_factory, x):
    p = tmp_path_factory.mktemp("rt") / "x.wav"
    write_wav(Waveform(x), p)
    y = read_wav(p).samples
    assert len(y) == len(x)
    assert np.max(np.abs(y - x)) <= 1 / 32768


def test_power_examples():
    assert measure_power(Waveform(np.full(10, 0.5))) == 0.25
    assert measure_power(Waveform(np.zeros(10))) == 0.0
    assert measure_power(Waveform(np.tile([1.0, -1.0], 50))) == 1.0
    with pytest.raises(EmptyAudioError):
        measure_power(np.array([]))


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1, 1)), st.floats(0.01, 100))
def test_power_scale_quadratic(x, k):
    p = measure_power(x)
    assert measure_power(k * x) == pytest.approx(k * k * p, rel=1e-12, abs=1e-300)


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        Waveform(np.zeros(3), sample_rate=0)
    w = Waveform(np.zeros(3))
    with pytest.raises(ValueError):
        w.samples[0] = 1.0
