import numpy as np
import pytest

from gradcheck_util import naive_dft

from affdet.audio import AudioClip
from affdet.dsp import (
    ConfigError,
    EmptyFrameError,
    FrameConfig,
    LfccConfig,
    MfccConfig,
    build_filterbank,
    dct2,
    extract_lfcc,
    extract_mfcc,
    fft,
    frame_signal,
    power_spectrum,
    scale_convert,
    window_vector,
)


def one_second(sr: int, seed: int = 0) -> AudioClip:
    rng = np.random.default_rng(seed)
    return AudioClip(samples=rng.uniform(-0.9, 0.9, sr), sample_rate=sr)


# --- framing ---------------------------------------------------------------


def test_centered_frame_count_matches_mfcc_geometry():
    clip = one_second(22050)
    frames = frame_signal(clip, FrameConfig(2048, 512, 2048, "hann", centered=True))
    assert frames.shape == (44, 2048)


def test_non_centered_single_frame_equals_signal():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, 256)
    clip = AudioClip(samples=x, sample_rate=8000)
    frames = frame_signal(clip, FrameConfig(256, 128, 256, "rect", centered=False))
    assert frames.shape == (1, 256)
    assert np.array_equal(frames[0], x)


def test_hann_endpoints_zero_out_samples():
    clip = AudioClip(samples=np.ones(512), sample_rate=8000)
    frames = frame_signal(clip, FrameConfig(512, 256, 512, "hann", centered=False))
    assert frames[0, 0] == 0.0
    assert frames[0, 511] == 0.0


def test_non_centered_too_short_raises():
    clip = AudioClip(samples=np.ones(100), sample_rate=8000)
    with pytest.raises(EmptyFrameError):
        frame_signal(clip, FrameConfig(256, 128, 256, "rect", centered=False))


def test_frame_config_validation():
    with pytest.raises(ConfigError):
        FrameConfig(300, 100, 300)  # not a power of two
    with pytest.raises(ConfigError):
        FrameConfig(256, 0, 256)
    with pytest.raises(ConfigError):
        FrameConfig(256, 64, 512)
    with pytest.raises(ConfigError):
        FrameConfig(256, 64, 256, window="blackman")


def test_window_symmetry():
    for name in ("hann", "hamming"):
        w = window_vector(name, 33)
        assert np.allclose(w, w[::-1])


# --- fft / power spectrum ---------------------------------------------------


def test_fft_impulse_and_constant():
    assert np.allclose(fft(np.array([1.0, 0, 0, 0])), np.ones(4))
    assert np.allclose(fft(np.array([1.0, 1, 1, 1])), [4, 0, 0, 0])


def test_fft_matches_naive_dft():
    rng = np.random.default_rng(7)
    for n in [2, 4, 8, 16, 64, 256]:
        x = rng.standard_normal(n)
        assert np.abs(fft(x) - naive_dft(x)).max() < 1e-9


def test_fft_zero_pads_and_batches():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((3, 100))
    out = fft(x, 128)
    padded = np.zeros((3, 128))
    padded[:, :100] = x
    assert out.shape == (3, 128)
    for row_out, row_in in zip(out, padded):
        assert np.abs(row_out - naive_dft(row_in)).max() < 1e-9


def test_fft_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        fft(np.zeros(5), 5)
    with pytest.raises(ConfigError):
        fft(np.zeros(10), 8)


def test_power_spectrum_trivial_frames():
    assert np.array_equal(power_spectrum(np.zeros(16)), np.zeros(9))
    impulse = np.zeros(16)
    impulse[0] = 1.0
    assert np.allclose(power_spectrum(impulse), np.ones(9))


def test_parseval_identity():
    rng = np.random.default_rng(9)
    n = 512
    x = rng.standard_normal(n)
    p = power_spectrum(x, n)
    spectral = (p[0] + 2 * p[1:-1].sum() + p[-1]) / n
    time_domain = (x**2).sum()
    assert abs(spectral - time_domain) / time_domain < 1e-6


# --- scales / filterbanks ----------------------------------------------------


def test_mel_scale_values():
    assert scale_convert(0.0, "mel") == 0.0
    expected = 2595.0 * np.log10(1.0 + 1000.0 / 700.0)
    assert scale_convert(1000.0, "mel") == pytest.approx(expected)
    assert expected == pytest.approx(999.99, abs=0.01)


def test_scale_round_trip_and_domain():
    for f in (100.0, 4000.0, 7999.0):
        back = scale_convert(scale_convert(f, "mel"), "mel", "to_hz")
        assert back == pytest.approx(f, rel=1e-9)
        assert scale_convert(f, "linear") == f
    with pytest.raises(ValueError):
        scale_convert(-1.0, "mel")


def test_linear_filterbank_breakpoints_equispaced_in_hz():
    fb = build_filterbank(24, 512, 16000, 0.0, 8000.0, "linear")
    # peaks of consecutive triangles are the interior breakpoints
    peak_bins = fb.weights.argmax(axis=1)
    peak_hz = peak_bins * 16000 / 512
    gaps = np.diff(peak_hz)
    assert np.abs(gaps - gaps[0]).max() <= 16000 / 512  # within one bin


def test_mel_filterbank_hz_gaps_increase():
    fb = build_filterbank(40, 2048, 22050, 0.0, 11025.0, "mel")
    lo = scale_convert(0.0, "mel")
    hi = scale_convert(11025.0, "mel")
    breakpoints = scale_convert(np.linspace(lo, hi, 42), "mel", "to_hz")
    hz_gaps = np.diff(breakpoints)
    assert np.all(np.diff(hz_gaps) > 0)  # strictly widening toward high Hz


def test_filterbank_coverage():
    for scale, sr, n_fft, n_filt in (("mel", 22050, 2048, 128), ("linear", 16000, 512, 24)):
        fb = build_filterbank(n_filt, n_fft, sr, 0.0, sr / 2, scale)
        assert np.all(fb.weights >= 0)
        bin_hz = np.arange(n_fft // 2 + 1) * sr / n_fft
        interior = (bin_hz > 0) & (bin_hz < sr / 2)
        assert np.all(fb.weights.sum(axis=0)[interior] > 0)


def test_filterbank_validation():
    with pytest.raises(ConfigError):
        build_filterbank(24, 512, 16000, 0.0, 9000.0, "linear")  # beyond Nyquist
    with pytest.raises(ConfigError):
        build_filterbank(0, 512, 16000, 0.0, 8000.0, "linear")
    with pytest.raises(ConfigError):
        build_filterbank(24, 512, 16000, 5000.0, 4000.0, "linear")


# --- dct -----------------------------------------------------------------


def test_dct2_constant_and_zero():
    n = 16
    v = np.full(n, 3.5)
    c = dct2(v)
    assert c[0] == pytest.approx(3.5 * np.sqrt(n))
    assert np.abs(c[1:]).max() < 1e-12
    assert np.array_equal(dct2(np.zeros(n)), np.zeros(n))


def test_dct2_orthonormal():
    rng = np.random.default_rng(11)
    v = rng.standard_normal(16)
    c = dct2(v)
    assert abs(np.linalg.norm(c) - np.linalg.norm(v)) < 1e-9
    # inverse of an orthonormal transform is its transpose
    from affdet.dsp import _dct2_matrix

    mat = _dct2_matrix(16, 16)
    assert np.abs(mat.T @ c - v).max() < 1e-9


def test_dct2_truncation_bound():
    with pytest.raises(ConfigError):
        dct2(np.zeros(8), 9)


# --- extractors ------------------------------------------------------------


def test_mfcc_default_shape_and_tags():
    m = extract_mfcc(one_second(16000))
    assert m.values.shape == (20, 44)
    assert m.kind == "mfcc"
    assert (m.axis0, m.axis1) == ("coefficient", "time")


def test_lfcc_default_shape_and_tags():
    m = extract_lfcc(one_second(16000))
    assert m.values.shape == (98, 13)
    assert m.kind == "lfcc"
    assert (m.axis0, m.axis1) == ("time", "coefficient")


def test_silent_clip_yields_constant_c0():
    silent = AudioClip(samples=np.zeros(22050), sample_rate=22050)
    m = extract_mfcc(silent)
    assert np.ptp(m.values[0]) < 1e-9  # c0 constant across time
    assert np.abs(m.values[1:]).max() < 1e-9

    l = extract_lfcc(AudioClip(samples=np.zeros(16000), sample_rate=16000))
    assert np.ptp(l.values[:, 0]) < 1e-9
    assert np.abs(l.values[:, 1:]).max() < 1e-9


def test_extractors_deterministic():
    clip = one_second(22050, seed=13)
    a = extract_mfcc(clip)
    b = extract_mfcc(clip)
    assert np.array_equal(a.values, b.values)


def test_extractors_finite_on_loud_input():
    loud = AudioClip(samples=np.sign(np.sin(np.arange(16000))), sample_rate=16000)
    assert np.all(np.isfinite(extract_mfcc(loud).values))
    assert np.all(np.isfinite(extract_lfcc(loud).values))


def test_hop_shift_moves_columns_by_one():
    # non-centered framing: dropping one hop of samples shifts time frames
    cfg = MfccConfig(centered=False)
    rng = np.random.default_rng(17)
    x = rng.uniform(-0.9, 0.9, 22050)
    full = extract_mfcc(AudioClip(samples=x, sample_rate=22050), cfg)
    shifted = extract_mfcc(AudioClip(samples=x[cfg.hop :], sample_rate=22050), cfg)
    n = shifted.values.shape[1]
    assert np.array_equal(shifted.values[:, : n], full.values[:, 1 : n + 1])


def test_lfcc_config_is_25ms_window_10ms_hop():
    cfg = LfccConfig()
    assert cfg.win_length == int(0.025 * cfg.sample_rate)
    assert cfg.hop == int(0.010 * cfg.sample_rate)
