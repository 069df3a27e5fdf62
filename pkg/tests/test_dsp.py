import io
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vocotrace import dsp
from vocotrace.audio import Waveform
from vocotrace.errors import ConfigError, FormatError, TooShortError

EPS = dsp.LOG_FLOOR


def dft_oracle(x):
    n = len(x)
    k = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * kk * k / n)) for kk in k])


def dct_oracle(x):
    n = len(x)
    out = np.empty(n)
    for k in range(n):
        s = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        out[k] = s * sum(x[i] * np.cos(np.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
    return out


@pytest.mark.parametrize("n", [2, 4, 8, 16, 32, 64])
def test_power_spectrum_matches_dft_oracle(rng, n):
    frames = rng.standard_normal((3, n))
    got = dsp.power_spectrum(frames, n)
    want = np.abs(np.stack([dft_oracle(f) for f in frames]))[:, : n // 2 + 1] ** 2
    assert np.max(np.abs(got - want)) < 1e-9


def test_zero_padding_matches_oracle(rng):
    frames = rng.standard_normal((2, 40))
    padded = np.concatenate([frames, np.zeros((2, 24))], axis=1)
    want = np.abs(np.stack([dft_oracle(f) for f in padded]))[:, :33] ** 2
    assert np.max(np.abs(dsp.power_spectrum(frames, 64) - want)) < 1e-9


@pytest.mark.parametrize("n", [1, 3, 8, 20, 40, 64])
def test_dct_matches_oracle(rng, n):
    rows = rng.standard_normal((2, n))
    got = dsp.dct_reduce(rows, n)
    want = np.stack([dct_oracle(r) for r in rows])
    assert np.max(np.abs(got - want)) < 1e-9


def test_dct_constant_and_inverse(rng):
    row = np.full((1, 40), 2.5)
    c = dsp.dct_reduce(row, 40)
    assert c[0, 0] == pytest.approx(2.5 * np.sqrt(40), abs=1e-12)
    assert np.max(np.abs(c[0, 1:])) < 1e-12
    import scipy.fft
    x = rng.standard_normal((4, 40))
    back = scipy.fft.idct(dsp.dct_reduce(x, 40), type=2, norm="ortho", axis=1)
    assert np.max(np.abs(back - x)) < 1e-9
    with pytest.raises(ConfigError):
        dsp.dct_reduce(x, 41)


def test_framing_counts():
    assert dsp.frame_and_window(np.zeros(480), 480, 240).n_frames == 1
    assert dsp.frame_and_window(np.zeros(24000), 480, 240).n_frames == 99
    ones = dsp.frame_and_window(np.ones(480), 480, 240)
    np.testing.assert_allclose(ones.frames[0], 0.54 - 0.46 * np.cos(2 * np.pi * np.arange(480) / 479), atol=0)
    with pytest.raises(TooShortError):
        dsp.frame_and_window(np.zeros(479), 480, 240)
    with pytest.raises(ConfigError):
        dsp.frame_and_window(np.zeros(1000), 480, 481)


@given(st.integers(480, 5000), st.integers(1, 480))
def test_frame_count_law(n, hop):
    f = dsp.frame_and_window(np.zeros(n), 480, hop)
    assert f.n_frames == (n - 480) // hop + 1


def test_rows_are_windowed_raw_frames(rng):
    x = rng.standard_normal(2000)
    f = dsp.frame_and_window(x, 480, 240)
    win = dsp.hamming(480)
    for t in range(f.n_frames):
        np.testing.assert_array_equal(f.frames[t], x[240 * t: 240 * t + 480] * win)


def test_power_spectrum_basics(rng):
    assert not dsp.power_spectrum(np.zeros((2, 480)), 512).any()
    # bin-centred cosine, rectangular window: all energy in bin k (and its mirror)
    n, k = 64, 5
    x = np.cos(2 * np.pi * k * np.arange(n) / n)
    spec = dsp.power_spectrum(x[None, :], n)[0]
    assert np.argmax(spec) == k
    assert spec[k] == pytest.approx((n / 2) ** 2)
    assert np.sum(np.delete(spec, k)) < 1e-18
    # Parseval with the one-sided convention: full-spectrum sum = n_fft * sum x^2
    frames = rng.standard_normal((3, 480))
    one = dsp.power_spectrum(frames, 512)
    full = one.sum(axis=1) * 2 - one[:, 0] - one[:, -1]
    np.testing.assert_allclose(full, 512 * np.sum(frames**2, axis=1), rtol=1e-9)
    with pytest.raises(ConfigError):
        dsp.power_spectrum(frames, 256)
    with pytest.raises(ConfigError):
        dsp.power_spectrum(frames, 600)


def test_filterbank_flat_and_zero():
    out = dsp.linear_filterbank(np.ones((1, 257)), 40, 24000.0)
    assert np.ptp(out[0, 1:-1]) < 1e-9
    assert np.all(dsp.linear_filterbank(np.zeros((1, 257)), 40, 24000.0) == np.log(EPS))
    with pytest.raises(ConfigError):
        dsp.linear_filterbank(np.ones((1, 257)), 1)


def overlap_oracle(bin_idx, n_filters=40, n_bins=257, fs=24000.0):
    """Filters whose triangle (centre +- spacing, open interval) covers the bin."""
    f = bin_idx * fs / (2 * (n_bins - 1))
    spacing = (fs / 2) / (n_filters - 1)
    return {m for m in range(n_filters) if abs(f - m * spacing) < spacing}


@pytest.mark.parametrize("b", [0, 1, 7, 64, 100, 128, 255, 256])
def test_filterbank_single_bin_impulse(b):
    spec = np.zeros((1, 257))
    spec[0, b] = 1.0
    out = dsp.linear_filterbank(spec, 40, 24000.0)[0]
    above = set(np.flatnonzero(out > np.log(EPS) + 1e-12))
    assert above == overlap_oracle(b)
    assert 1 <= len(above) <= 2


def test_lfcc_shape_and_padding(rng):
    m = dsp.extract_lfcc(Waveform(rng.standard_normal(24000) * 0.1))
    assert m.coeffs.shape == (500, 20)
    assert m.true_frames == 99
    assert not m.coeffs[99:].any()
    assert m.coeffs[98].any()
    long = dsp.extract_lfcc(rng.standard_normal(120480) * 0.1)
    assert long.true_frames == 500
    assert np.all(np.any(long.coeffs != 0, axis=1))


def test_lfcc_shape_random_lengths(rng):
    for n in rng.integers(480, 130000, 100):
        assert dsp.extract_lfcc(rng.standard_normal(int(n))).coeffs.shape == (500, 20)


def test_lfcc_deterministic(rng):
    x = rng.standard_normal(30000)
    a, b = dsp.extract_lfcc(x), dsp.extract_lfcc(x.copy())
    assert a.coeffs.tobytes() == b.coeffs.tobytes()


def test_lfcc_too_short():
    with pytest.raises(TooShortError):
        dsp.extract_lfcc(np.zeros(479))


def test_hop_shift_shifts_rows(rng):
    x = rng.standard_normal(10000)
    a = dsp.lfcc_frames(x)
    b = dsp.lfcc_frames(np.concatenate([np.zeros(240), x]))
    np.testing.assert_allclose(a[1:], b[2: a.shape[0] + 1], atol=1e-9)
    c = dsp.lfcc_frames(x[240:])
    np.testing.assert_allclose(a[1:], c[: a.shape[0] - 1], atol=1e-9)


def test_cache_record_layout(rng, tmp_path):
    m = dsp.extract_lfcc(rng.standard_normal(24000))
    buf = io.BytesIO()
    dsp.write_record(buf, m)
    raw = buf.getvalue()
    assert len(raw) == 16 + 500 * 20 * 4
    assert struct.unpack("<4sIII", raw[:16]) == (b"LFCC", 1, 99, 0)
    back = dsp.read_record(io.BytesIO(raw))
    assert back.true_frames == 99
    np.testing.assert_array_equal(back.coeffs, m.coeffs.astype("<f4"))
    path = tmp_path / "f.lfcc"
    assert dsp.save_features(path, [m, m]) == 2
    assert dsp.load_features(path).shape == (2, 500, 20)
    with pytest.raises(FormatError):
        dsp.read_record(io.BytesIO(b"NOPE" + raw[4:]))
    with pytest.raises(FormatError):
        dsp.read_record(io.BytesIO(raw[:100]))


def test_dsp_hash_is_stable():
    assert dsp.dsp_config_hash() == dsp.dsp_config_hash()
    assert len(dsp.dsp_config_hash()) == 16
