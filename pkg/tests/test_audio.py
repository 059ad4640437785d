import struct

import numpy as np
import pytest

from affdet.audio import (
    AudioClip,
    AudioDecodeError,
    UnsupportedFormatError,
    load_wav,
    resample,
    save_wav,
    segment_one_second,
)


def write_pcm16(path, frames: np.ndarray, sr: int, n_channels: int):
    """Raw PCM-16 writer independent of save_wav."""
    data = frames.astype("<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, 1, n_channels, sr, sr * 2 * n_channels, 2 * n_channels, 16,
        b"data", len(data),
    )
    path.write_bytes(header + data)


def test_pcm16_sample_scaling(tmp_path):
    path = tmp_path / "x.wav"
    write_pcm16(path, np.array([16384, -32768, 0, 32767]), 8000, 1)
    clip = load_wav(path)
    assert clip.sample_rate == 8000
    assert clip.samples[0] == pytest.approx(0.5)
    assert clip.samples[1] == -1.0
    assert clip.samples[2] == 0.0


def test_stereo_downmix_is_channel_mean(tmp_path):
    path = tmp_path / "st.wav"
    left, right = 0.2, 0.4
    frames = np.array([round(left * 32768), round(right * 32768)])
    write_pcm16(path, frames, 8000, 2)
    clip = load_wav(path)
    assert clip.samples.shape == (1,)
    assert clip.samples[0] == pytest.approx(0.3, abs=1e-4)


def test_float32_wav(tmp_path):
    path = tmp_path / "f.wav"
    data = np.array([0.25, -0.75], dtype="<f4").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, 3, 1, 16000, 16000 * 4, 4, 32,
        b"data", len(data),
    )
    path.write_bytes(header + data)
    clip = load_wav(path)
    assert np.allclose(clip.samples, [0.25, -0.75])


def test_bad_riff_magic_names_chunk(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"JUNK" + b"\x00" * 40)
    with pytest.raises(AudioDecodeError, match="RIFF"):
        load_wav(path)


def test_missing_data_chunk(tmp_path):
    path = tmp_path / "nodata.wav"
    header = struct.pack("<4sI4s4sIHHIIHH", b"RIFF", 28, b"WAVE",
                         b"fmt ", 16, 1, 1, 8000, 16000, 2, 16)
    path.write_bytes(header)
    with pytest.raises(AudioDecodeError, match="data"):
        load_wav(path)


def test_unsupported_codec(tmp_path):
    path = tmp_path / "alaw.wav"
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 38, b"WAVE",
        b"fmt ", 16, 6, 1, 8000, 8000, 1, 8,  # A-law
        b"data", 2,
    )
    path.write_bytes(header + b"\x00\x00")
    with pytest.raises(UnsupportedFormatError):
        load_wav(path)


def test_pcm_roundtrip_within_one_lsb(tmp_path):
    rng = np.random.default_rng(3)
    clip = AudioClip(samples=rng.uniform(-1, 1, 2000), sample_rate=16000)
    path = tmp_path / "rt.wav"
    save_wav(path, clip)
    back = load_wav(path)
    assert back.sample_rate == 16000
    assert np.abs(back.samples - clip.samples).max() <= 1.0 / 32768


def test_resample_constant_stays_constant():
    clip = AudioClip(samples=np.full(8000, 0.7), sample_rate=8000)
    out = resample(clip, 12345)
    assert np.allclose(out.samples, 0.7)


def test_resample_identity_is_bitwise():
    rng = np.random.default_rng(0)
    clip = AudioClip(samples=rng.uniform(-1, 1, 999), sample_rate=16000)
    out = resample(clip, 16000)
    assert np.array_equal(out.samples, clip.samples)


def test_resample_length_formula():
    clip = AudioClip(samples=np.zeros(16000), sample_rate=16000)
    out = resample(clip, 22050)
    assert len(out) == round(16000 * 22050 / 16000) == 22050


def test_resample_roundtrip_on_bandlimited_tone():
    sr = 16000
    t = np.arange(sr) / sr
    tone = 0.8 * np.sin(2 * np.pi * 1500 * t)  # well under sr/8
    clip = AudioClip(samples=tone, sample_rate=sr)
    back = resample(resample(clip, 22050), sr)
    assert len(back) == sr
    assert np.abs(back.samples - tone).max() < 0.05


def test_segmentation_counts_and_tiling():
    sr = 16000
    rng = np.random.default_rng(1)
    clip = AudioClip(samples=rng.uniform(-1, 1, int(2.5 * sr)), sample_rate=sr)
    segs = segment_one_second(clip)
    assert len(segs) == 2
    assert all(len(s) == sr for s in segs)

    short = AudioClip(samples=np.zeros(int(0.8 * sr)), sample_rate=sr)
    assert segment_one_second(short) == []

    exact = AudioClip(samples=rng.uniform(-1, 1, 3 * sr), sample_rate=sr)
    segs = segment_one_second(exact)
    assert len(segs) == 3
    rebuilt = np.concatenate([s.samples for s in segs])
    assert np.array_equal(rebuilt, exact.samples)


def test_clip_validation():
    with pytest.raises(ValueError):
        AudioClip(samples=np.zeros(10), sample_rate=0)
    with pytest.raises(ValueError):
        AudioClip(samples=np.zeros((2, 5)), sample_rate=8000)
