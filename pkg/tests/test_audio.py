import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isnmf.audio import (SpectrogramDataset, build_dataset, decode_wav, discard_silence, frame_count,
                         load_audio, load_dataset, meta_path, save_dataset, sine_window, stft_power,
                         write_wav)
from isnmf.errors import AllSilent, TooShort, UnsupportedFormat


def test_frame_count_examples():
    assert stft_power(np.ones(512)).shape == (257, 1)
    assert stft_power(np.ones(1024)).shape == (257, 3)
    assert stft_power(np.ones(1023)).shape == (257, 2)
    with pytest.raises(TooShort):
        stft_power(np.ones(511))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 3000), st.integers(1, 64))
def test_frame_count_formula(extra, hop):
    length = 64 + extra
    assert stft_power(np.zeros(length), 64, hop).shape[1] == (length - 64) // hop + 1 == frame_count(length, 64, hop)


def test_bad_window_arguments():
    with pytest.raises(ValueError):
        stft_power(np.ones(100), window=7)
    with pytest.raises(ValueError):
        stft_power(np.ones(100), window=8, hop=9)


def test_zero_signal_is_silent():
    spec = stft_power(np.zeros(2048))
    assert not spec.any()
    with pytest.raises(AllSilent):
        discard_silence(spec)


def test_spectrum_matches_direct_dft():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(16)
    w = sine_window(16)
    n = np.arange(16)
    direct = [abs(np.sum(x * w * np.exp(-2j * np.pi * k * n / 16))) ** 2 for k in range(9)]
    np.testing.assert_allclose(stft_power(x, 16, 8)[:, 0], direct, rtol=1e-12)


def test_sine_window_overlap_adds_to_constant():
    w = sine_window(512)
    np.testing.assert_allclose(w[:256] ** 2 + w[256:] ** 2, 1.0, rtol=1e-14)


def test_silence_rules():
    ones = np.ones((3, 4))
    ds = discard_silence(ones)
    assert ds.n_frames == 4 and ds.discarded_count == 0
    spec = np.ones((2, 4))
    spec[:, 2] = 0
    ds = discard_silence(spec)
    assert ds.discarded_count == 1 and ds.frame_meta[:, 1].tolist() == [0, 1, 3]
    two = np.array([[1.0, 1e-7]])
    assert discard_silence(two, -60).n_frames == 1
    assert discard_silence(np.array([[1.0, 1e-6]]), -60).n_frames == 2  # exactly -60 dB stays


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=40), st.floats(-120, 0))
def test_silence_keeps_order_and_counts(powers, db):
    powers = np.array(powers)
    if powers.max() <= 0:
        return
    ds = discard_silence(powers[None, :], db)
    assert ds.n_frames + ds.discarded_count == len(powers)
    assert np.all(np.diff(ds.frame_meta[:, 1]) > 0)
    np.testing.assert_array_equal(ds.frames[0], powers[ds.frame_meta[:, 1]])


def test_pcm_decoding(tmp_path):
    p = tmp_path / "a.wav"
    write_wav(p, np.array([32767, -32768, 0]) / 32768.0, 8000)
    x, rate = load_audio(p)
    assert rate == 8000
    assert x.tolist() == [32767 / 32768, -1.0, 0.0]


def test_stereo_downmix_and_float(tmp_path):
    p = tmp_path / "s.wav"
    write_wav(p, np.tile([0.5, -0.5], (100, 1)), 16000, float32=True)
    x, _ = load_audio(p)
    assert x.shape == (100,) and not x.any()


def test_extensible_header():
    fmt = struct.pack("<HHIIHH", 0xFFFE, 1, 100, 200, 2, 16) + struct.pack("<HHIH", 22, 16, 0, 1) + b"\0" * 14
    data = struct.pack("<2h", 16384, -16384)
    blob = b"RIFF" + struct.pack("<I", 0) + b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    blob += b"data" + struct.pack("<I", len(data)) + data
    x, rate = decode_wav(blob)
    assert rate == 100 and x.tolist() == [0.5, -0.5]


@pytest.mark.parametrize("cut", [0, 10, 20, 30, 40])
def test_truncated_header(tmp_path, cut):
    p = tmp_path / "a.wav"
    write_wav(p, np.zeros(10), 8000)
    blob = p.read_bytes()[:cut]
    with pytest.raises(UnsupportedFormat):
        decode_wav(blob)


def test_unsupported_formats():
    fmt = struct.pack("<HHIIHH", 1, 1, 100, 100, 1, 8)
    blob = b"RIFFxxxxWAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", 2) + b"\0\0"
    with pytest.raises(UnsupportedFormat):
        decode_wav(blob)
    fmt = struct.pack("<HHIIHH", 1, 3, 100, 600, 6, 16)
    blob = b"RIFFxxxxWAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", 6) + b"\0" * 6
    with pytest.raises(UnsupportedFormat):
        decode_wav(blob)


def test_dataset_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    paths = []
    for i, n in enumerate((3000, 2000)):
        x = 0.3 * rng.standard_normal(n)
        x[:600] = 0.0  # quiet lead-in
        paths.append(tmp_path / f"{i}.wav")
        write_wav(paths[-1], x, 8000)
    ds = build_dataset(paths, window=256, hop=128)
    assert ds.frames.shape[0] == 129 and ds.discarded_count > 0
    assert ds.sample_rate == 8000
    assert set(ds.frame_meta[:, 0]) == {0, 1}
    save_dataset(tmp_path / "ds", ds)
    assert (tmp_path / "ds.meta").exists() and meta_path(tmp_path / "ds").endswith(".meta")
    back = load_dataset(tmp_path / "ds")
    assert back.frames.tobytes() == ds.frames.tobytes()
    np.testing.assert_array_equal(back.frame_meta, ds.frame_meta)
    assert (back.sample_rate, back.discarded_count, back.sources) == (ds.sample_rate, ds.discarded_count, ds.sources)


def test_dataset_without_sidecar(tmp_path):
    from isnmf.matrixio import save_matrix
    save_matrix(tmp_path / "m", np.ones((3, 2)))
    ds = load_dataset(tmp_path / "m")
    assert ds.n_frames == 2 and ds.frame_meta[:, 1].tolist() == [0, 1]
    assert isinstance(ds, SpectrogramDataset)


def test_mismatched_sample_rates(tmp_path):
    write_wav(tmp_path / "a.wav", np.ones(600) * 0.1, 8000)
    write_wav(tmp_path / "b.wav", np.ones(600) * 0.1, 16000)
    with pytest.raises(UnsupportedFormat):
        build_dataset([tmp_path / "a.wav", tmp_path / "b.wav"])
